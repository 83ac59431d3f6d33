use super::Init;
use crate::error::{Error, Result};
use crate::hgraph::NodeType;
use crate::tensor::{Matrix, ParamId, ParamStore, Tape, Var};

/// Dense affine map `x·W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(init: &mut Init, name: &str, in_dim: usize, out_dim: usize, bias: bool) -> Result<Self> {
        let w = init.glorot(&format!("{name}.W"), in_dim, out_dim)?;
        let b = if bias {
            Some(init.zeros(&format!("{name}.b"), 1, out_dim)?)
        } else {
            None
        };
        Ok(Linear { w, b, in_dim, out_dim })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let h = tape.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add(h, b)
            }
            None => Ok(h),
        }
    }
}

#[derive(Clone, Debug)]
enum TypeMap {
    Linear(Linear),
    Embedding { table: ParamId, count: usize },
}

/// Type-specific projection into a shared hidden space: `h' = h·W_t + b_t`
/// for typed nodes with features, a trainable `n × d` table for featureless
/// types.
#[derive(Clone, Debug)]
pub struct HeteroLinear {
    maps: Vec<(String, TypeMap)>,
    pub out_dim: usize,
}

impl HeteroLinear {
    pub fn new(init: &mut Init, name: &str, node_types: &[NodeType], out_dim: usize) -> Result<Self> {
        let maps = node_types
            .iter()
            .map(|t| {
                let map = if t.feature_dim == 0 {
                    let std = 1.0 / (out_dim as f64).sqrt();
                    TypeMap::Embedding {
                        table: init.normal(&format!("{name}.{}.emb", t.name), t.count, out_dim, std)?,
                        count: t.count,
                    }
                } else {
                    TypeMap::Linear(Linear::new(
                        init,
                        &format!("{name}.{}", t.name),
                        t.feature_dim,
                        out_dim,
                        true,
                    )?)
                };
                Ok((t.name.clone(), map))
            })
            .collect::<Result<_>>()?;
        Ok(HeteroLinear { maps, out_dim })
    }

    /// Projects one input per node type, in schema order. Featureless
    /// types take `None`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, inputs: &[Option<&Matrix>]) -> Result<Vec<Var>> {
        if inputs.len() != self.maps.len() {
            return Err(Error::ShapeMismatch {
                what: "typed inputs".into(),
                expected: self.maps.len().to_string(),
                got: inputs.len().to_string(),
            });
        }
        self.maps
            .iter()
            .zip(inputs)
            .map(|((name, map), x)| match (map, x) {
                (TypeMap::Embedding { table, .. }, None) => Ok(tape.param(store, *table)),
                (TypeMap::Linear(lin), Some(x)) => {
                    if x.ncols() != lin.in_dim {
                        return Err(Error::ShapeMismatch {
                            what: format!("features of `{name}`"),
                            expected: format!("{} columns", lin.in_dim),
                            got: format!("{} columns", x.ncols()),
                        });
                    }
                    let xv = tape.constant((*x).clone());
                    lin.forward(tape, store, xv)
                }
                (TypeMap::Linear(_), None) => Err(Error::UnknownType(format!("{name} (features missing)"))),
                (TypeMap::Embedding { count, .. }, Some(x)) => Err(Error::ShapeMismatch {
                    what: format!("features of featureless type `{name}`"),
                    expected: format!("none ({count} embedded nodes)"),
                    got: format!("{} columns", x.ncols()),
                }),
            })
            .collect()
    }
}
