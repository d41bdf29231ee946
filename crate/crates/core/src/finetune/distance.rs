//! Euclidean distance between fine-tuned and initial parameters.

use serde::{Deserialize, Serialize};

use super::ReferenceModel;
use crate::models::mlp::{Dense, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Hidden,
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDistance {
    pub name: String,
    pub component: Component,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDistance {
    pub hidden: f64,
    pub head: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDistanceReport {
    pub total: f64,
    pub per_layer: Vec<LayerDistance>,
    pub per_component: ComponentDistance,
}

fn layer_sq(a: &Dense, b: &Dense) -> f64 {
    let w: f64 = a.weights.iter().zip(&b.weights).map(|(x, y)| (x - y).powi(2)).sum();
    let c: f64 = a.bias.iter().zip(&b.bias).map(|(x, y)| (x - y).powi(2)).sum();
    w + c
}

/// Distance between two networks of the same shape. Layers are named
/// `hidden.{i}` and the last one `head`.
pub fn network_distance(after: &Network, before: &Network) -> WeightDistanceReport {
    assert_eq!(after.sizes(), before.sizes(), "networks differ in shape");
    let last = after.layers.len() - 1;
    let mut per_layer = Vec::with_capacity(after.layers.len());
    let (mut hidden_sq, mut head_sq) = (0.0, 0.0);
    for (l, (a, b)) in after.layers.iter().zip(&before.layers).enumerate() {
        let sq = layer_sq(a, b);
        let (name, component) = if l == last {
            head_sq += sq;
            ("head".to_string(), Component::Head)
        } else {
            hidden_sq += sq;
            (format!("hidden.{l}"), Component::Hidden)
        };
        per_layer.push(LayerDistance {
            name,
            component,
            distance: sq.sqrt(),
        });
    }
    WeightDistanceReport {
        total: (hidden_sq + head_sq).sqrt(),
        per_layer,
        per_component: ComponentDistance {
            hidden: hidden_sq.sqrt(),
            head: head_sq.sqrt(),
        },
    }
}

/// Distance of the model's current parameters from its frozen initial copy.
pub fn weight_distance(model: &ReferenceModel) -> WeightDistanceReport {
    network_distance(model.network(), model.init())
}
