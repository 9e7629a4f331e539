//! Per-edit-type backend selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::EditType;

pub const DEFAULT_BACKEND: &str = "default";
pub const INPAINT_BACKEND: &str = "inpaint";
pub const GLOBAL_BACKEND: &str = "global";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RouteError {
    #[error("backend `{backend}` for {edit_type} has no registered client")]
    UnregisteredBackend {
        edit_type: EditType,
        backend: String,
    },
    #[error("unknown routing profile `{0}`")]
    UnknownProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingProfile {
    /// Removal to an inpainter, style to a global editor, the rest to default.
    BagOfModels,
    /// Every edit type goes to the default backend.
    SingleModel,
}

impl RoutingProfile {
    pub fn name(self) -> &'static str {
        match self {
            RoutingProfile::BagOfModels => "bag-of-models",
            RoutingProfile::SingleModel => "single-model",
        }
    }
}

impl std::str::FromStr for RoutingProfile {
    type Err = RouteError;
    fn from_str(s: &str) -> Result<Self, RouteError> {
        match s.trim() {
            "bag-of-models" => Ok(Self::BagOfModels),
            "single-model" => Ok(Self::SingleModel),
            other => Err(RouteError::UnknownProfile(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingTable {
    #[serde(default)]
    pub routes: BTreeMap<EditType, String>,
    pub default_backend: String,
}

impl RoutingTable {
    pub fn single(default_backend: impl Into<String>) -> Self {
        Self {
            routes: BTreeMap::new(),
            default_backend: default_backend.into(),
        }
    }

    pub fn with_route(mut self, edit_type: EditType, backend: impl Into<String>) -> Self {
        self.routes.insert(edit_type, backend.into());
        self
    }

    pub fn from_profile(profile: RoutingProfile) -> Self {
        match profile {
            RoutingProfile::SingleModel => Self::single(DEFAULT_BACKEND),
            RoutingProfile::BagOfModels => Self::single(DEFAULT_BACKEND)
                .with_route(EditType::Remove, INPAINT_BACKEND)
                .with_route(EditType::Style, GLOBAL_BACKEND),
        }
    }

    /// Total over all edit types.
    pub fn route(&self, edit_type: EditType) -> &str {
        self.routes
            .get(&edit_type)
            .map(String::as_str)
            .unwrap_or(&self.default_backend)
    }

    /// Every backend id this table can resolve to.
    pub fn backends(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.routes.values().map(String::as_str).collect();
        ids.push(&self.default_backend);
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Resolves the backend for `edit_type` and checks a client exists for it.
pub fn route_edit(
    edit_type: EditType,
    table: &RoutingTable,
    is_registered: impl Fn(&str) -> bool,
) -> Result<&str, RouteError> {
    let backend = table.route(edit_type);
    if is_registered(backend) {
        Ok(backend)
    } else {
        Err(RouteError::UnregisteredBackend {
            edit_type,
            backend: backend.to_string(),
        })
    }
}
