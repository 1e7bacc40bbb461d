//! Convex bodies, action sets, best-action cones and convex decompositions.

mod actions;
mod body;
mod decompose;
pub(crate) mod fmt17;

pub use actions::{best_action, optimal_region_contains, ActionSet, ActionsDoc, PolytopeVertexSet, SlabPolytope, UnitActionSet};
pub(crate) use actions::dot;
pub use body::{random_unit, uniform_in_ball, BodyShape, ConvexBody, RegularityReport, SamplerConfig};
pub use decompose::{caratheodory_decompose, Decomposition};

use serde::{Deserialize, Serialize};

use crate::Result;

/// `{"body": {...}, "actions": {"kind": "unit"|"vertices", "vectors": [...]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryDocument {
    pub body: ConvexBody,
    pub actions: ActionsDoc,
}

impl GeometryDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_round_trips_bit_exactly() {
        let body = ConvexBody::boxed(vec![-0.5, -1.0], vec![1.0, 1.0]).unwrap().scaled(0.1f64.sqrt()).unwrap();
        let a = 2.0 * std::f64::consts::PI / 7.0;
        let doc = GeometryDocument {
            body,
            actions: ActionsDoc::Unit { vectors: vec![vec![a.cos(), a.sin()], vec![1.0, 0.0]] },
        };
        let text = doc.to_json().unwrap();
        assert!(text.contains("\"kind\": \"box\""));
        assert!(text.contains("\"kind\": \"unit\""));
        let back = GeometryDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn non_finite_floats_refuse_to_serialize() {
        let doc = GeometryDocument {
            body: ConvexBody::unit_ball(2),
            actions: ActionsDoc::Vertices { vectors: vec![vec![f64::NAN, 0.0]] },
        };
        assert!(doc.to_json().is_err());
    }
}
