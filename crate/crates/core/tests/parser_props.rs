use proptest::prelude::*;

use xplan_core::{
    parse_plan, serialize_plan, validate_plan, EditType, NormBox, Plan, SubInstruction,
};

fn edit_type() -> impl Strategy<Value = EditType> {
    proptest::sample::select(EditType::ALL.to_vec())
}

fn phrase() -> impl Strategy<Value = String> {
    proptest::collection::vec("[a-z][a-z0-9'-]{0,7}", 1..4).prop_map(|w| w.join(" "))
}

fn grid_box() -> impl Strategy<Value = NormBox> {
    let span = (0u32..=1000, 0u32..=1000)
        .prop_filter("non-degenerate", |(a, b)| a != b)
        .prop_map(|(a, b)| (a.min(b) as f64 / 1000.0, a.max(b) as f64 / 1000.0));
    (span.clone(), span).prop_map(|((x1, x2), (y1, y2))| NormBox::new(x1, y1, x2, y2).unwrap())
}

prop_compose! {
    fn sub()(t in edit_type(), text in phrase(), a in phrase(), b in phrase(),
             embed in any::<bool>(), bx in grid_box(), style_anchor in any::<bool>())
        -> SubInstruction {
        let anchors = match t {
            EditType::Replace => vec![a, b],
            EditType::Style if !style_anchor => vec![],
            _ => vec![a],
        };
        let text = if embed {
            format!("{text} {}", anchors.join(" and "))
        } else {
            text
        };
        let sub = SubInstruction::new(0, t, text.trim().to_string()).with_anchors(anchors);
        if t == EditType::Insertion { sub.with_box(bx) } else { sub }
    }
}

fn plan() -> impl Strategy<Value = Plan> {
    (phrase(), proptest::collection::vec(sub(), 1..=5)).prop_map(|(src, subs)| Plan::new(src, subs))
}

proptest! {
    #[test]
    fn serialize_parse_round_trip(p in plan()) {
        prop_assert!(validate_plan(&p).is_empty());
        let text = serialize_plan(&p).unwrap();
        let back = parse_plan(&text, &p.source_instruction).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn colon_syntax_agrees_with_brackets(p in plan()) {
        let text = serialize_plan(&p).unwrap();
        let colon: Vec<String> = text
            .lines()
            .map(|l| {
                let (head, rest) = l[1..].split_once(']').unwrap();
                match rest.strip_prefix('<') {
                    // Keep the box token attached to the type for insertion lines.
                    Some(_) => format!("[{head}]{rest}"),
                    None => format!("{head}: {}", rest.trim_start()),
                }
            })
            .collect();
        let back = parse_plan(&colon.join("\n"), &p.source_instruction).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn classification_is_total(inner in "[^<>\n]{0,24}") {
        let token = format!("<{inner}>");
        let _ = xplan_core::parse_control_token(&token);
    }
}
