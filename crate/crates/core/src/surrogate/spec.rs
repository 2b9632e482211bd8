use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SurrogateError;
use crate::epi::state::COMPARTMENTS;
use crate::scenario::DatasetHeader;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    GcnConv,
    ArmaConv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Elu,
    Linear,
}

impl LayerKind {
    pub fn is_graph(self) -> bool {
        !matches!(self, LayerKind::Dense)
    }
}

macro_rules! named_enum {
    ($t:ty, $($v:ident => $s:literal),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),+ })
            }
        }

        impl FromStr for $t {
            type Err = SurrogateError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok(Self::$v),)+
                    other => Err(SurrogateError::InvalidSpec(format!("unknown {} '{other}'", stringify!($t)))),
                }
            }
        }
    };
}

named_enum!(LayerKind, Dense => "dense", GcnConv => "gcn_conv", ArmaConv => "arma_conv");
named_enum!(Activation, Relu => "relu", Elu => "elu", Linear => "linear");

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub channels: usize,
    pub activation: Activation,
    /// Parallel stacks `K` of an ARMA layer.
    #[serde(default = "one")]
    pub stacks: usize,
    /// Recurrent updates `T` per ARMA stack.
    #[serde(default = "one")]
    pub iterations: usize,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, channels: usize, activation: Activation) -> Self {
        Self { kind, channels, activation, stacks: 1, iterations: 1 }
    }

    pub fn dense(channels: usize, activation: Activation) -> Self {
        Self::new(LayerKind::Dense, channels, activation)
    }

    pub fn gcn(channels: usize, activation: Activation) -> Self {
        Self::new(LayerKind::GcnConv, channels, activation)
    }

    pub fn arma(channels: usize, activation: Activation, stacks: usize, iterations: usize) -> Self {
        Self { kind: LayerKind::ArmaConv, channels, activation, stacks, iterations }
    }

    /// Parameter shapes in storage order for an input width `c_in`.
    pub fn param_shapes(&self, c_in: usize) -> Vec<Vec<usize>> {
        let c = self.channels;
        match self.kind {
            LayerKind::Dense | LayerKind::GcnConv => vec![vec![c_in, c], vec![c]],
            LayerKind::ArmaConv => {
                let mut shapes = Vec::new();
                for _ in 0..self.stacks {
                    shapes.extend([vec![c_in, c], vec![c_in, c], vec![c]]);
                    if self.iterations > 1 {
                        shapes.push(vec![c, c]);
                    }
                }
                shapes
            }
        }
    }
}

/// Named hidden-layer stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Three ARMA layers of 64 channels.
    Desk,
    /// Seven ARMA layers of 512 channels, one stack, one iteration.
    Large,
    /// Three dense layers of 64 channels.
    Mlp,
    /// Three GCN layers of 64 channels.
    Gcn,
}

named_enum!(Preset, Desk => "desk", Large => "large", Mlp => "mlp", Gcn => "gcn");

impl Preset {
    pub fn hidden(self) -> Vec<LayerSpec> {
        let relu = Activation::Relu;
        match self {
            Preset::Desk => vec![LayerSpec::arma(64, relu, 1, 1); 3],
            Preset::Large => vec![LayerSpec::arma(512, relu, 1, 1); 7],
            Preset::Mlp => vec![LayerSpec::dense(64, relu); 3],
            Preset::Gcn => vec![LayerSpec::gcn(64, relu); 3],
        }
    }
}

/// Architecture of a surrogate; the last layer is the linear readout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    /// Features per row: one row per node (spatial) or per sample.
    pub input_width: usize,
    /// `horizon * 48` outputs per row.
    pub output_width: usize,
    pub spatial: bool,
    pub horizon: usize,
    /// Rows per sample.
    pub nodes: usize,
}

impl ModelSpec {
    /// Hidden layers followed by a linear head sized for `horizon`.
    pub fn new(
        hidden: Vec<LayerSpec>,
        input_width: usize,
        horizon: usize,
        nodes: usize,
        spatial: bool,
    ) -> Result<Self, SurrogateError> {
        let output_width = horizon * COMPARTMENTS;
        let mut layers = hidden;
        layers.push(LayerSpec::dense(output_width, Activation::Linear));
        let spec = Self { layers, input_width, output_width, spatial, horizon, nodes };
        spec.validate()?;
        Ok(spec)
    }

    /// Sized for the samples described by `header`.
    pub fn for_dataset(header: &DatasetHeader, hidden: Vec<LayerSpec>) -> Result<Self, SurrogateError> {
        let spatial = header.config.spatial;
        let [rows, width] = header.feature_shape;
        let (input_width, nodes) = if spatial { (width, rows) } else { (rows * width, 1) };
        Self::new(hidden, input_width, header.label_shape[0], nodes, spatial)
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: String| Err(SurrogateError::InvalidSpec(m));
        let Some(last) = self.layers.last() else {
            return bad("at least the readout layer is required".into());
        };
        if last.kind != LayerKind::Dense || last.activation != Activation::Linear {
            return bad("final layer must be dense and linear".into());
        }
        if last.channels != self.output_width || self.output_width != self.horizon * COMPARTMENTS {
            return bad(format!("readout width {} does not match horizon {}", last.channels, self.horizon));
        }
        if self.input_width == 0 || self.nodes == 0 || self.horizon == 0 {
            return bad("input width, nodes and horizon must be positive".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.channels == 0 {
                return bad(format!("layer {i} has no channels"));
            }
            if l.stacks == 0 || l.iterations == 0 {
                return bad(format!("layer {i} needs at least one stack and iteration"));
            }
            if l.kind != LayerKind::ArmaConv && (l.stacks != 1 || l.iterations != 1) {
                return bad(format!("layer {i}: stacks and iterations apply to arma_conv only"));
            }
            if l.kind.is_graph() && !self.spatial {
                return bad(format!("layer {i}: graph layers need a spatial model"));
            }
        }
        Ok(())
    }

    pub fn uses_graph(&self) -> bool {
        self.layers.iter().any(|l| l.kind.is_graph())
    }

    /// Parameter shapes of all layers in storage order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut c_in = self.input_width;
        let mut shapes = Vec::new();
        for l in &self.layers {
            shapes.extend(l.param_shapes(c_in));
            c_in = l.channels;
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    pub fn feature_len(&self) -> usize {
        self.nodes * self.input_width
    }

    pub fn label_len(&self) -> usize {
        self.nodes * self.output_width
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_is_appended() {
        let spec = ModelSpec::new(Preset::Desk.hidden(), 354, 30, 20, true).unwrap();
        assert_eq!(spec.layers.len(), 4);
        assert_eq!(spec.output_width, 1440);
        assert_eq!(spec.param_shapes()[0], vec![354, 64]);
        assert_eq!(spec.param_shapes().last().unwrap(), &vec![1440]);
    }

    #[test]
    fn arma_shapes_depend_on_iterations() {
        assert_eq!(LayerSpec::arma(4, Activation::Relu, 2, 1).param_shapes(3).len(), 6);
        assert_eq!(LayerSpec::arma(4, Activation::Relu, 2, 3).param_shapes(3).len(), 8);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(ModelSpec::new(Preset::Gcn.hidden(), 810, 30, 1, false).is_err());
        assert!(ModelSpec::new(vec![LayerSpec::dense(0, Activation::Relu)], 810, 30, 1, false).is_err());
        let mut spec = ModelSpec::new(vec![], 810, 30, 1, false).unwrap();
        spec.layers[0].activation = Activation::Relu;
        assert!(spec.validate().is_err());
        assert!(ModelSpec::new(vec![LayerSpec::arma(4, Activation::Relu, 0, 1)], 354, 30, 5, true).is_err());
    }

    #[test]
    fn names_round_trip() {
        for k in [LayerKind::Dense, LayerKind::GcnConv, LayerKind::ArmaConv] {
            assert_eq!(k.to_string().parse::<LayerKind>().unwrap(), k);
        }
        assert_eq!("large".parse::<Preset>().unwrap(), Preset::Large);
        assert!("lstm".parse::<LayerKind>().is_err());
    }
}
