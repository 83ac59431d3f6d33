//! Heterogeneous message-passing building blocks.
//!
//! Every layer is a parameter container registered in a [`ParamStore`] plus
//! a forward function that records onto a [`Tape`]. Graph structure enters
//! through [`MessageGraph`], an edge-list view of one subgraph (dual
//! aggregation) or of the homogenized graph (direct aggregation).

mod aggregate;
mod conv;
mod graph;
mod linear;
mod macro_agg;
mod post;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use aggregate::{direct_aggregate, dual_aggregate, pass_through, Aggregation, LayerGraphs, Layout, MpLayer, Slot, TypedGraph};
pub use conv::MicroConv;
pub use graph::MessageGraph;
pub use linear::{HeteroLinear, Linear};
pub use macro_agg::MacroAgg;
pub use post::{connect, intra_layer_post, Act, PostOps};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, ParamId, ParamStore};

macro_rules! choice_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord,
                 serde::Serialize, serde::Deserialize)]
        pub enum $name {
            $(#[serde(rename = $token)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = $crate::error::Error;

            fn from_str(s: &str) -> $crate::error::Result<Self> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|c| c.as_str().eq_ignore_ascii_case(s))
                    .ok_or_else(|| $crate::error::Error::Config(vec![format!(
                        "`{s}` is not a {} (expected one of {})",
                        stringify!($name),
                        $name::ALL.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", ")
                    )]))
            }
        }
    };
}
pub(crate) use choice_enum;

choice_enum! {
    /// Micro-level convolution.
    ConvKind { Gcn => "GCNConv", Gat => "GATConv", Sage => "SageConv", Gin => "GINConv" }
}

choice_enum! {
    /// Macro-level reducer across subgraphs sharing a destination type.
    MacroKind { Mean => "Mean", Max => "Max", Sum => "Sum", Attention => "Attention" }
}

choice_enum! {
    /// Attention logits used by GAT convolutions under direct aggregation.
    AttentionForm { Gat => "GAT", SimpleHgn => "SimpleHGN" }
}

choice_enum! {
    Activation { Relu => "ReLU", LeakyRelu => "LeakyReLU", Elu => "ELU", Tanh => "Tanh", PRelu => "PReLU" }
}

choice_enum! {
    /// Inter-layer connectivity.
    Connectivity { Stack => "STACK", SkipSum => "SKIP-SUM", SkipCat => "SKIP-CAT" }
}

/// Slope of every leaky ReLU, including GAT attention logits.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Initial slope of a PReLU activation.
pub const PRELU_INIT: f64 = 0.25;

/// Deterministic parameter factory.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl<'a> Init<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Init {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Glorot-uniform matrix.
    pub fn glorot(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        let limit = (6.0 / (rows + cols).max(1) as f64).sqrt();
        let rng = &mut self.rng;
        let m = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..=limit));
        self.store.add(name, m)
    }

    /// Entries drawn from `N(0, std²)`.
    pub fn normal(&mut self, name: &str, rows: usize, cols: usize, std: f64) -> Result<ParamId> {
        let dist = Normal::new(0.0, std).map_err(|e| Error::shape("init", e.to_string()))?;
        let rng = &mut self.rng;
        let m = Array2::from_shape_fn((rows, cols), |_| dist.sample(rng));
        self.store.add(name, m)
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        self.store.add(name, Matrix::zeros((rows, cols)))
    }

    pub fn constant(&mut self, name: &str, rows: usize, cols: usize, value: f64) -> Result<ParamId> {
        self.store.add(name, Matrix::from_elem((rows, cols), value))
    }
}

/// Per-forward settings: train/eval mode and the dropout stream.
#[derive(Clone, Debug)]
pub struct ForwardCtx {
    pub training: bool,
    seed: u64,
    calls: u64,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        ForwardCtx {
            training: false,
            seed: 0,
            calls: 0,
        }
    }

    /// Training mode; dropout masks derive from `seed` and the order of
    /// dropout calls within the pass.
    pub fn train(seed: u64) -> Self {
        ForwardCtx {
            training: true,
            seed,
            calls: 0,
        }
    }

    pub(crate) fn next_seed(&mut self) -> u64 {
        self.calls += 1;
        splitmix64(self.seed ^ self.calls.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

/// SplitMix64 finalizer, used to derive independent seeds from counters.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
