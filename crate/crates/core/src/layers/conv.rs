use super::{AttentionForm, ConvKind, Init, Linear, MessageGraph, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, ParamId, ParamStore, Tape, Var};

#[derive(Clone, Debug)]
struct RelationLogits {
    emb: ParamId,
    w_r: ParamId,
    a_r: ParamId,
}

#[derive(Clone, Debug)]
enum ConvParams {
    Gcn(Linear),
    Gat {
        w: ParamId,
        a_src: ParamId,
        a_dst: ParamId,
        rel: Option<RelationLogits>,
    },
    Sage(Linear),
    Gin {
        eps: ParamId,
        mlp1: Linear,
        mlp2: Linear,
    },
}

/// One micro-level graph convolution instance.
#[derive(Clone, Debug)]
pub struct MicroConv {
    pub kind: ConvKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Add self-loops on square graphs (GCN only).
    pub self_loops: bool,
    params: ConvParams,
}

impl MicroConv {
    /// `form` matters only for GAT; SimpleHGN logits need the number of
    /// edge types the convolution will see.
    pub fn new(
        init: &mut Init,
        name: &str,
        kind: ConvKind,
        in_dim: usize,
        out_dim: usize,
        form: AttentionForm,
        n_etypes: usize,
    ) -> Result<Self> {
        let params = match kind {
            ConvKind::Gcn => ConvParams::Gcn(Linear::new(init, name, in_dim, out_dim, true)?),
            ConvKind::Gat => {
                let w = init.glorot(&format!("{name}.W"), in_dim, out_dim)?;
                let a_src = init.glorot(&format!("{name}.a_src"), out_dim, 1)?;
                let a_dst = init.glorot(&format!("{name}.a_dst"), out_dim, 1)?;
                let rel = match form {
                    AttentionForm::Gat => None,
                    AttentionForm::SimpleHgn => Some(RelationLogits {
                        emb: init.glorot(&format!("{name}.rel_emb"), n_etypes.max(1), out_dim)?,
                        w_r: init.glorot(&format!("{name}.W_r"), out_dim, out_dim)?,
                        a_r: init.glorot(&format!("{name}.a_r"), out_dim, 1)?,
                    }),
                };
                ConvParams::Gat { w, a_src, a_dst, rel }
            }
            ConvKind::Sage => ConvParams::Sage(Linear::new(init, name, 2 * in_dim, out_dim, true)?),
            ConvKind::Gin => ConvParams::Gin {
                eps: init.zeros(&format!("{name}.eps"), 1, 1)?,
                mlp1: Linear::new(init, &format!("{name}.mlp1"), in_dim, out_dim, true)?,
                mlp2: Linear::new(init, &format!("{name}.mlp2"), out_dim, out_dim, true)?,
            },
        };
        Ok(MicroConv {
            kind,
            in_dim,
            out_dim,
            self_loops: true,
            params,
        })
    }

    /// The relation projection `W_r` of a SimpleHGN attention, if any.
    pub fn relation_projection(&self) -> Option<ParamId> {
        match &self.params {
            ConvParams::Gat { rel: Some(r), .. } => Some(r.w_r),
            _ => None,
        }
    }

    fn check_inputs(&self, tape: &Tape, g: &MessageGraph, h_src: Var, h_dst: Var) -> Result<()> {
        let [rs, cs] = tape.shape(h_src);
        let [rd, cd] = tape.shape(h_dst);
        if rs != g.n_src || rd != g.n_dst || cs != self.in_dim || cd != self.in_dim {
            return Err(Error::shape(
                "micro_conv",
                format!(
                    "{}: inputs {rs}x{cs} -> {rd}x{cd}, graph {} -> {} nodes, in_dim {}",
                    self.kind, g.n_src, g.n_dst, self.in_dim
                ),
            ));
        }
        Ok(())
    }

    /// Messages from `h_src` reduced onto the destinations of `g`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, g: &MessageGraph, h_src: Var, h_dst: Var) -> Result<Var> {
        self.check_inputs(tape, g, h_src, h_dst)?;
        match &self.params {
            ConvParams::Gcn(lin) => {
                let e = g.gcn(self.self_loops);
                let w = tape.param(store, lin.w);
                let z = tape.matmul(h_src, w)?;
                let z = tape.gather_rows(z, &e.src)?;
                let norm = tape.constant(e.norm.clone());
                let msg = tape.mul(z, norm)?;
                let agg = tape.segment_sum(msg, &e.dst, g.n_dst)?;
                let b = tape.param(store, lin.b.expect("GCN has a bias"));
                tape.add(agg, b)
            }
            ConvParams::Gat { w, .. } => {
                let w = tape.param(store, *w);
                let z_src = tape.matmul(h_src, w)?;
                let alpha = self.attention_from(tape, store, g, z_src, h_dst, w)?;
                let msg = tape.gather_rows(z_src, &g.src)?;
                let msg = tape.mul(msg, alpha)?;
                tape.segment_sum(msg, &g.dst, g.n_dst)
            }
            ConvParams::Sage(lin) => {
                let nb = tape.gather_rows(h_src, &g.src)?;
                let mean = tape.segment_mean(nb, &g.dst, g.n_dst)?;
                let cat = tape.concat(&[h_dst, mean], 1)?;
                lin.forward(tape, store, cat)
            }
            ConvParams::Gin { eps, mlp1, mlp2 } => {
                let nb = tape.gather_rows(h_src, &g.src)?;
                let agg = tape.segment_sum(nb, &g.dst, g.n_dst)?;
                let eps = tape.param(store, *eps);
                let one = tape.constant(Matrix::ones((1, 1)));
                let scale = tape.add(eps, one)?;
                let own = tape.mul(h_dst, scale)?;
                let z = tape.add(own, agg)?;
                let z = mlp1.forward(tape, store, z)?;
                let z = tape.relu(z);
                mlp2.forward(tape, store, z)
            }
        }
    }

    /// Attention coefficients (`E × 1`, edge order of `g`) of a GAT
    /// convolution.
    pub fn attention(&self, tape: &mut Tape, store: &ParamStore, g: &MessageGraph, h_src: Var, h_dst: Var) -> Result<Var> {
        self.check_inputs(tape, g, h_src, h_dst)?;
        let ConvParams::Gat { w, .. } = &self.params else {
            return Err(Error::shape("attention", format!("{} has no attention", self.kind)));
        };
        let w = tape.param(store, *w);
        let z_src = tape.matmul(h_src, w)?;
        self.attention_from(tape, store, g, z_src, h_dst, w)
    }

    fn attention_from(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        g: &MessageGraph,
        z_src: Var,
        h_dst: Var,
        w: Var,
    ) -> Result<Var> {
        let ConvParams::Gat { a_src, a_dst, rel, .. } = &self.params else {
            unreachable!("attention on a non-GAT convolution");
        };
        let z_dst = tape.matmul(h_dst, w)?;
        let a_src = tape.param(store, *a_src);
        let a_dst = tape.param(store, *a_dst);
        let s_src = tape.matmul(z_src, a_src)?;
        let s_dst = tape.matmul(z_dst, a_dst)?;
        let e_dst = tape.gather_rows(s_dst, &g.dst)?;
        let e_src = tape.gather_rows(s_src, &g.src)?;
        let mut logits = tape.add(e_dst, e_src)?;
        if let Some(r) = rel {
            let emb = tape.param(store, r.emb);
            let w_r = tape.param(store, r.w_r);
            let a_r = tape.param(store, r.a_r);
            let proj = tape.matmul(emb, w_r)?;
            let s_rel = tape.matmul(proj, a_r)?;
            let e_rel = tape.gather_rows(s_rel, &g.etype)?;
            logits = tape.add(logits, e_rel)?;
        }
        let logits = tape.leaky_relu(logits, LEAKY_SLOPE);
        tape.segment_softmax(logits, &g.dst, g.n_dst)
    }
}
