use super::{Activation, Connectivity, ForwardCtx, Init, LEAKY_SLOPE, PRELU_INIT};
use crate::error::{Error, Result};
use crate::tensor::{BufferId, Matrix, ParamId, ParamStore, Tape, Var};

/// An activation instance; PReLU owns its slope.
#[derive(Clone, Debug)]
pub struct Act {
    pub kind: Activation,
    slope: Option<ParamId>,
}

impl Act {
    pub fn new(init: &mut Init, name: &str, kind: Activation) -> Result<Self> {
        let slope = match kind {
            Activation::PRelu => Some(init.constant(&format!("{name}.prelu"), 1, 1, PRELU_INIT)?),
            _ => None,
        };
        Ok(Act { kind, slope })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        Ok(match self.kind {
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
            Activation::Elu => tape.elu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::PRelu => {
                let s = tape.param(store, self.slope.expect("PReLU slope"));
                tape.prelu(x, s)?
            }
        })
    }
}

#[derive(Clone, Debug)]
struct BatchNorm {
    gamma: ParamId,
    beta: ParamId,
    running: BufferId,
}

/// Optional modules applied after aggregation, in the order
/// batch norm, dropout, activation, L2 normalization. Batch-norm
/// statistics are kept per node type.
#[derive(Clone, Debug, Default)]
pub struct PostOps {
    bn: Vec<BatchNorm>,
    pub dropout: f64,
    pub act: Option<Act>,
    pub l2: bool,
}

impl PostOps {
    /// `bn_types` is the number of node types to keep statistics for;
    /// zero disables batch norm.
    pub fn new(
        init: &mut Init,
        name: &str,
        dim: usize,
        bn_types: usize,
        dropout: f64,
        act: Option<Activation>,
        l2: bool,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(vec![format!("{name}: dropout {dropout} outside [0, 1)")]));
        }
        let bn = (0..bn_types)
            .map(|t| {
                let gamma = init.constant(&format!("{name}.bn{t}.gamma"), 1, dim, 1.0)?;
                let beta = init.zeros(&format!("{name}.bn{t}.beta"), 1, dim)?;
                let mut stats = Matrix::zeros((2, dim));
                stats.row_mut(1).fill(1.0);
                let running = init.store.add_buffer(format!("{name}.bn{t}.running"), stats);
                Ok(BatchNorm { gamma, beta, running })
            })
            .collect::<Result<_>>()?;
        let act = act.map(|k| Act::new(init, name, k)).transpose()?;
        Ok(PostOps { bn, dropout, act, l2 })
    }

    pub fn has_bn(&self) -> bool {
        !self.bn.is_empty()
    }
}

/// Applies `ops` to the representations `h` of node type `type_slot`.
pub fn intra_layer_post(
    tape: &mut Tape,
    store: &mut ParamStore,
    ctx: &mut ForwardCtx,
    ops: &PostOps,
    type_slot: usize,
    h: Var,
) -> Result<Var> {
    let mut h = h;
    if let Some(bn) = ops.bn.get(type_slot) {
        let gamma = tape.param(store, bn.gamma);
        let beta = tape.param(store, bn.beta);
        h = tape.batch_norm(h, gamma, beta, store, bn.running, ctx.training)?;
    } else if ops.has_bn() {
        return Err(Error::shape("intra_layer_post", format!("no batch norm for type slot {type_slot}")));
    }
    if ops.dropout > 0.0 && ctx.training {
        let seed = ctx.next_seed();
        h = tape.dropout(h, ops.dropout, true, seed)?;
    }
    if let Some(act) = &ops.act {
        h = act.forward(tape, store, h)?;
    }
    if ops.l2 {
        h = tape.l2_normalize(h, 1)?;
    }
    Ok(h)
}

/// Combines a layer's input and output representations.
pub fn connect(tape: &mut Tape, mode: Connectivity, prev: Var, new: Var) -> Result<Var> {
    match mode {
        Connectivity::Stack => Ok(new),
        Connectivity::SkipSum => {
            if tape.shape(prev) != tape.shape(new) {
                return Err(Error::shape(
                    "connect",
                    format!("SKIP-SUM of {:?} and {:?}", tape.shape(prev), tape.shape(new)),
                ));
            }
            tape.add(prev, new)
        }
        Connectivity::SkipCat => tape.concat(&[prev, new], 1),
    }
}
