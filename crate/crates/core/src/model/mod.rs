//! Whole networks assembled from a [`DesignConfig`]: heterogeneous linear
//! pre-processing, a stack of message-passing layers shaped by the model
//! family, a shared post-processing MLP and a task head.

mod config;

pub use config::{DesignConfig, ModelFamily, DIMENSIONS};

use crate::designspace::structural_errors;
use crate::error::{Error, Result};
use crate::hgraph::{HeteroGraph, Schema};
use crate::layers::{
    Act, ForwardCtx, HeteroLinear, Init, LayerGraphs, Layout, Linear, MpLayer, PostOps, Slot,
};
use crate::tensor::{Index, Matrix, ParamStore, Tape, Var};
use crate::train::Task;
use crate::transform::{compose_metapath, extract_relation_subgraphs};

/// Layout of the message-passing structure a config implies for a schema.
pub fn layout_for(cfg: &DesignConfig, schema: &Schema) -> Result<Layout> {
    let n_types = schema.node_types.len();
    Ok(match cfg.model_family {
        ModelFamily::Homogenization => Layout::Direct {
            n_etypes: schema.relations.len().max(1),
            n_types,
        },
        ModelFamily::Relation => Layout::Dual {
            slots: schema
                .relations
                .iter()
                .map(|r| {
                    Ok(Slot {
                        name: r.name.clone(),
                        src_type: schema.type_index(&r.src_type)?,
                        dst_type: schema.type_index(&r.dst_type)?,
                    })
                })
                .collect::<Result<_>>()?,
            n_types,
        },
        ModelFamily::Metapath => Layout::Dual {
            slots: cfg
                .metapaths
                .iter()
                .map(|mp| {
                    let (s, d) = mp.endpoints(schema)?;
                    Ok(Slot {
                        name: mp.name.clone(),
                        src_type: schema.type_index(&s)?,
                        dst_type: schema.type_index(&d)?,
                    })
                })
                .collect::<Result<_>>()?,
            n_types,
        },
    })
}

/// A graph transformed for one model: its message-passing structure and
/// the input features of every node type.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub graphs: LayerGraphs,
    pub features: Vec<Option<Matrix>>,
}

/// Per-type linear map followed by an activation.
#[derive(Clone, Debug)]
struct Dense {
    lin: Linear,
    act: Act,
}

impl Dense {
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let z = self.lin.forward(tape, store, x)?;
        self.act.forward(tape, store, z)
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: DesignConfig,
    pub schema: Schema,
    pub store: ParamStore,
    pub layout: Layout,
    pre: HeteroLinear,
    /// `pre_layers - 1` blocks, each holding one map per node type.
    pre_blocks: Vec<Vec<Dense>>,
    layers: Vec<MpLayer>,
    post: Vec<Dense>,
    head: Option<Linear>,
    out_types: Vec<usize>,
}

/// Builds a model for graphs with `schema`. Parameters are initialized
/// deterministically from `cfg.seed`.
///
/// Only structural soundness is checked here (family/macro consistency,
/// meta-path chaining, task, positive sizes); membership in a particular
/// design space is the caller's concern.
pub fn build_model(cfg: &DesignConfig, schema: &Schema) -> Result<Model> {
    let errors = structural_errors(cfg, schema);
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let layout = layout_for(cfg, schema)?;
    let n_types = schema.node_types.len();
    let hidden = cfg.hidden;
    let mut store = ParamStore::new();
    let mut init = Init::new(&mut store, cfg.seed);

    let pre = HeteroLinear::new(&mut init, "pre0", &schema.node_types, hidden)?;
    let pre_blocks = (1..cfg.pre_layers)
        .map(|i| {
            schema
                .node_types
                .iter()
                .map(|t| {
                    let name = format!("pre{i}.{}", t.name);
                    Ok(Dense {
                        lin: Linear::new(&mut init, &name, hidden, hidden, true)?,
                        act: Act::new(&mut init, &name, cfg.activation)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut width = hidden;
    let mut layers = Vec::with_capacity(cfg.mp_layers);
    for l in 0..cfg.mp_layers {
        let name = format!("mp{l}");
        let post = PostOps::new(
            &mut init,
            &format!("{name}.post"),
            hidden,
            if cfg.bn { n_types } else { 0 },
            cfg.dropout,
            Some(cfg.activation),
            cfg.l2norm,
        )?;
        let layer = MpLayer::new(
            &mut init,
            &name,
            &layout,
            cfg.micro,
            cfg.macro_agg,
            cfg.attention_form,
            width,
            hidden,
            post,
            cfg.connectivity,
        )?;
        width = layer.out_dim();
        layers.push(layer);
    }

    let post = (0..cfg.post_layers)
        .map(|i| {
            let name = format!("post{i}");
            let lin = Linear::new(&mut init, &name, if i == 0 { width } else { hidden }, hidden, true)?;
            Ok(Dense {
                lin,
                act: Act::new(&mut init, &name, cfg.activation)?,
            })
        })
        .collect::<Result<_>>()?;

    let head = match &cfg.task {
        Task::NodeClassification { num_classes, .. } => {
            Some(Linear::new(&mut init, "head", hidden, *num_classes, true)?)
        }
        Task::LinkPrediction { .. } => None,
    };
    let out_types = cfg.task.output_types(schema)?;
    Ok(Model {
        cfg: cfg.clone(),
        schema: schema.clone(),
        store,
        layout,
        pre,
        pre_blocks,
        layers,
        post,
        head,
        out_types,
    })
}

impl Model {
    /// Exact number of trainable scalars.
    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    /// Node types whose representations [`Model::forward`] returns, as schema
    /// indices (source then destination for link prediction).
    pub fn output_types(&self) -> &[usize] {
        &self.out_types
    }

    /// Width of the representation fed into the post-processing MLP.
    pub fn post_input_dim(&self) -> usize {
        self.layers.last().map_or(self.cfg.hidden, MpLayer::out_dim)
    }

    /// Applies the family's graph transformation to `g`.
    pub fn prepare(&self, g: &HeteroGraph) -> Result<PreparedGraph> {
        if g.schema() != &self.schema {
            return Err(Error::ShapeMismatch {
                what: "graph schema".into(),
                expected: describe(&self.schema),
                got: describe(g.schema()),
            });
        }
        let graphs = match self.cfg.model_family {
            ModelFamily::Homogenization => LayerGraphs::direct(g),
            ModelFamily::Relation => {
                let names: Vec<String> = g.relations().iter().map(|r| r.name.clone()).collect();
                LayerGraphs::dual(g, &extract_relation_subgraphs(g, &names)?)?
            }
            ModelFamily::Metapath => {
                let subs = self
                    .cfg
                    .metapaths
                    .iter()
                    .map(|mp| compose_metapath(g, mp))
                    .collect::<Result<Vec<_>>>()?;
                LayerGraphs::dual(g, &subs)?
            }
        };
        debug_assert_eq!(graphs.layout(), self.layout);
        let features = (0..g.node_types().len()).map(|t| g.features_at(t).cloned()).collect();
        Ok(PreparedGraph { graphs, features })
    }

    /// Representations of the output types after post-processing, one per
    /// entry of [`Model::output_types`]; each is `count × hidden`.
    pub fn forward(&mut self, tape: &mut Tape, graph: &PreparedGraph, ctx: &mut ForwardCtx) -> Result<Vec<Var>> {
        let Model {
            store,
            pre,
            pre_blocks,
            layers,
            post,
            out_types,
            ..
        } = self;
        let feats: Vec<Option<&Matrix>> = graph.features.iter().map(Option::as_ref).collect();
        let mut h = pre.forward(tape, store, &feats)?;
        for block in pre_blocks.iter() {
            for (hv, dense) in h.iter_mut().zip(block) {
                *hv = dense.forward(tape, store, *hv)?;
            }
        }
        for layer in layers.iter() {
            h = layer.forward(tape, store, ctx, &graph.graphs, &h)?;
        }
        let mut done: Vec<Option<Var>> = vec![None; h.len()];
        out_types
            .iter()
            .map(|&t| {
                if let Some(v) = done[t] {
                    return Ok(v);
                }
                let mut x = h[t];
                for dense in post.iter() {
                    x = dense.forward(tape, store, x)?;
                }
                done[t] = Some(x);
                Ok(x)
            })
            .collect()
    }

    /// Class logits of the target type (node classification only).
    pub fn logits(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::Config(vec!["logits: the task has no classification head".into()]))?;
        head.forward(tape, &self.store, h)
    }

    /// Dot-product logits `h_src[s]·h_dst[d]` for each pair; the link
    /// probability is their sigmoid.
    pub fn link_logits(&self, tape: &mut Tape, h_src: Var, h_dst: Var, src: &Index, dst: &Index) -> Result<Var> {
        let a = tape.gather_rows(h_src, src)?;
        let b = tape.gather_rows(h_dst, dst)?;
        let prod = tape.mul(a, b)?;
        Ok(tape.sum_axis(prod, 1))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn describe(s: &Schema) -> String {
    let types: Vec<String> = s.node_types.iter().map(|t| format!("{}[{}]", t.name, t.count)).collect();
    let rels: Vec<&str> = s.relations.iter().map(|r| r.name.as_str()).collect();
    format!("types {} relations {}", types.join(","), rels.join(","))
}

/// Link probabilities `σ(h_src[s]·h_dst[d])` for each `(s, d)` pair.
pub fn score_links(h_src: &Matrix, h_dst: &Matrix, src_ids: &[usize], dst_ids: &[usize]) -> Result<Vec<f64>> {
    if src_ids.len() != dst_ids.len() {
        return Err(Error::ShapeMismatch {
            what: "link pairs".into(),
            expected: format!("{} destination ids", src_ids.len()),
            got: dst_ids.len().to_string(),
        });
    }
    if h_src.ncols() != h_dst.ncols() {
        return Err(Error::shape(
            "score_links",
            format!("widths {} and {} differ", h_src.ncols(), h_dst.ncols()),
        ));
    }
    src_ids
        .iter()
        .zip(dst_ids)
        .map(|(&s, &d)| {
            if s >= h_src.nrows() || d >= h_dst.nrows() {
                return Err(Error::shape(
                    "score_links",
                    format!("pair ({s}, {d}) out of range for {} x {} nodes", h_src.nrows(), h_dst.nrows()),
                ));
            }
            Ok(sigmoid(h_src.row(s).dot(&h_dst.row(d))))
        })
        .collect()
}
