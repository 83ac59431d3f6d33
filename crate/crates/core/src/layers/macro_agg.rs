use std::sync::Arc;

use super::{Init, MacroKind};
use crate::error::{Error, Result};
use crate::tensor::{Index, ParamId, ParamStore, Tape, Var};

/// Semantic-level attention: one weight per subgraph, shared by every node
/// of the destination type.
#[derive(Clone, Debug)]
struct Semantic {
    w: ParamId,
    b: ParamId,
    q: ParamId,
}

/// Reducer across the subgraph outputs that share a destination type.
#[derive(Clone, Debug)]
pub struct MacroAgg {
    pub kind: MacroKind,
    semantic: Option<Semantic>,
}

impl MacroAgg {
    pub fn new(init: &mut Init, name: &str, kind: MacroKind, dim: usize) -> Result<Self> {
        let semantic = match kind {
            MacroKind::Attention => Some(Semantic {
                w: init.glorot(&format!("{name}.W"), dim, dim)?,
                b: init.zeros(&format!("{name}.b"), 1, dim)?,
                q: init.glorot(&format!("{name}.q"), dim, 1)?,
            }),
            _ => None,
        };
        Ok(MacroAgg { kind, semantic })
    }

    /// Fuses equally shaped per-subgraph outputs. A single output is
    /// returned unchanged by every kind.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, outputs: &[Var]) -> Result<Var> {
        let (&first, rest) = outputs
            .split_first()
            .ok_or_else(|| Error::shape("macro_aggregate", "no subgraph outputs"))?;
        let shape = tape.shape(first);
        if let Some(&bad) = rest.iter().find(|&&v| tape.shape(v) != shape) {
            return Err(Error::shape(
                "macro_aggregate",
                format!("outputs {:?} and {:?} differ", shape, tape.shape(bad)),
            ));
        }
        if rest.is_empty() {
            return Ok(first);
        }
        match self.kind {
            MacroKind::Sum => sum(tape, outputs),
            MacroKind::Mean => {
                let s = sum(tape, outputs)?;
                Ok(tape.scale(s, 1.0 / outputs.len() as f64))
            }
            MacroKind::Max => {
                let n = shape[0];
                let stacked = tape.concat(outputs, 0)?;
                let index: Index = Arc::from((0..n * outputs.len()).map(|i| i % n).collect::<Vec<_>>());
                tape.segment_max(stacked, &index, n)
            }
            MacroKind::Attention => {
                let weights = self.weights(tape, store, outputs)?;
                let mut acc: Option<Var> = None;
                for (p, &z) in outputs.iter().enumerate() {
                    let w = tape.slice_cols(weights, p, p + 1)?;
                    let term = tape.mul(z, w)?;
                    acc = Some(match acc {
                        Some(a) => tape.add(a, term)?,
                        None => term,
                    });
                }
                Ok(acc.expect("at least two outputs"))
            }
        }
    }

    /// Softmaxed semantic weights (`1 × P`) over the given outputs.
    pub fn weights(&self, tape: &mut Tape, store: &ParamStore, outputs: &[Var]) -> Result<Var> {
        let sem = self
            .semantic
            .as_ref()
            .ok_or_else(|| Error::shape("macro_aggregate", format!("{} has no attention weights", self.kind)))?;
        let w = tape.param(store, sem.w);
        let b = tape.param(store, sem.b);
        let q = tape.param(store, sem.q);
        let mut scores = Vec::with_capacity(outputs.len());
        for &z in outputs {
            let h = tape.matmul(z, w)?;
            let h = tape.add(h, b)?;
            let h = tape.tanh(h);
            let rows = tape.shape(h)[0].max(1) as f64;
            let pooled = tape.sum_axis(h, 0);
            let pooled = tape.scale(pooled, 1.0 / rows);
            scores.push(tape.matmul(pooled, q)?);
        }
        let scores = tape.concat(&scores, 1)?;
        Ok(tape.row_softmax(scores))
    }
}

fn sum(tape: &mut Tape, outputs: &[Var]) -> Result<Var> {
    let mut acc = outputs[0];
    for &v in &outputs[1..] {
        acc = tape.add(acc, v)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn run(kind: MacroKind, outs: &[ndarray::Array2<f64>]) -> ndarray::Array2<f64> {
        let mut store = ParamStore::new();
        let agg = MacroAgg::new(&mut Init::new(&mut store, 5), "m", kind, outs[0].ncols()).unwrap();
        let mut t = Tape::new();
        let vars: Vec<Var> = outs.iter().map(|o| t.constant(o.clone())).collect();
        let y = agg.forward(&mut t, &store, &vars).unwrap();
        t.value(y).clone()
    }

    #[test]
    fn sum_mean_max_by_hand() {
        let outs = [array![[1.0, 2.0]], array![[3.0, 4.0]]];
        assert_eq!(run(MacroKind::Sum, &outs), array![[4.0, 6.0]]);
        assert_eq!(run(MacroKind::Mean, &outs), array![[2.0, 3.0]]);
        let outs = [array![[1.0, 5.0], [0.0, -1.0]], array![[3.0, 4.0], [-2.0, -3.0]]];
        assert_eq!(run(MacroKind::Max, &outs), array![[3.0, 5.0], [0.0, -1.0]]);
    }

    #[test]
    fn singleton_is_unchanged_for_every_kind() {
        let o = array![[0.5, -1.0], [2.0, 3.0]];
        for &k in MacroKind::ALL {
            assert_eq!(run(k, &[o.clone()]), o);
        }
    }

    #[test]
    fn attention_on_identical_outputs_is_mean() {
        let o = array![[0.5, -1.0, 2.0], [2.0, 3.0, 0.1]];
        let outs = [o.clone(), o.clone(), o.clone()];
        let a = run(MacroKind::Attention, &outs);
        let m = run(MacroKind::Mean, &outs);
        for (x, y) in a.iter().zip(m.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let mut store = ParamStore::new();
        let agg = MacroAgg::new(&mut Init::new(&mut store, 2), "m", MacroKind::Attention, 2).unwrap();
        let mut t = Tape::new();
        let a = t.constant(array![[1.0, 2.0], [0.0, 1.0]]);
        let b = t.constant(array![[-1.0, 0.5], [3.0, 1.0]]);
        let w = agg.weights(&mut t, &store, &[a, b]).unwrap();
        assert!((t.value(w).sum() - 1.0).abs() < 1e-12);
    }
}
