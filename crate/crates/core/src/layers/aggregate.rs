use super::{
    connect, intra_layer_post, AttentionForm, Connectivity, ConvKind, ForwardCtx, Init, MacroAgg, MacroKind,
    MessageGraph, MicroConv, PostOps,
};
use crate::error::{Error, Result};
use crate::hgraph::HeteroGraph;
use crate::transform::{homogenize, Subgraph};
use crate::tensor::{ParamStore, Tape, Var};

/// A prepared subgraph with its endpoint node types (schema indices).
#[derive(Clone, Debug)]
pub struct TypedGraph {
    pub name: String,
    pub graph: MessageGraph,
    pub src_type: usize,
    pub dst_type: usize,
}

/// Graph structure a message-passing stack runs on.
#[derive(Clone, Debug)]
pub enum LayerGraphs {
    /// Homogenized graph plus the node count of every type, in schema order
    /// (global ids are type blocks laid out in that order).
    Direct { graph: MessageGraph, type_counts: Vec<usize> },
    Dual { subgraphs: Vec<TypedGraph>, n_types: usize },
}

impl LayerGraphs {
    /// Homogenized view of `g`.
    pub fn direct(g: &HeteroGraph) -> Self {
        let hg = homogenize(g);
        LayerGraphs::Direct {
            graph: MessageGraph::from_homograph(&hg),
            type_counts: g.node_types().iter().map(|t| t.count).collect(),
        }
    }

    /// One typed graph per subgraph of `g`.
    pub fn dual(g: &HeteroGraph, subgraphs: &[Subgraph]) -> Result<Self> {
        let schema = g.schema();
        let subgraphs = subgraphs
            .iter()
            .map(|s| {
                Ok(TypedGraph {
                    name: s.origin.name().to_string(),
                    graph: MessageGraph::from_subgraph(s),
                    src_type: schema.type_index(&s.src_type)?,
                    dst_type: schema.type_index(&s.dst_type)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(LayerGraphs::Dual {
            subgraphs,
            n_types: g.node_types().len(),
        })
    }

    pub fn n_types(&self) -> usize {
        match self {
            LayerGraphs::Direct { type_counts, .. } => type_counts.len(),
            LayerGraphs::Dual { n_types, .. } => *n_types,
        }
    }

    /// The structure-only view that layer construction needs.
    pub fn layout(&self) -> Layout {
        match self {
            LayerGraphs::Direct { graph, type_counts } => Layout::Direct {
                n_etypes: graph.n_etypes,
                n_types: type_counts.len(),
            },
            LayerGraphs::Dual { subgraphs, n_types } => Layout::Dual {
                slots: subgraphs
                    .iter()
                    .map(|s| Slot {
                        name: s.name.clone(),
                        src_type: s.src_type,
                        dst_type: s.dst_type,
                    })
                    .collect(),
                n_types: *n_types,
            },
        }
    }
}

/// Endpoint types of one subgraph, without its edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub src_type: usize,
    pub dst_type: usize,
}

/// Shape of the graph structure a layer runs on: how many edge types the
/// homogenized graph carries, or which typed subgraphs exist. Derivable
/// from a schema alone, so models can be built before any graph is loaded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layout {
    Direct { n_etypes: usize, n_types: usize },
    Dual { slots: Vec<Slot>, n_types: usize },
}

/// One convolution over the homogenized graph; `h` holds every node in
/// global-id order.
pub fn direct_aggregate(tape: &mut Tape, store: &ParamStore, conv: &MicroConv, graph: &MessageGraph, h: Var) -> Result<Var> {
    conv.forward(tape, store, graph, h, h)
}

/// Micro convolution per subgraph, then macro reduction per destination
/// type. Types that receive no subgraph map to `None`.
pub fn dual_aggregate(
    tape: &mut Tape,
    store: &ParamStore,
    convs: &[MicroConv],
    macros: &[Option<MacroAgg>],
    subgraphs: &[TypedGraph],
    h: &[Var],
) -> Result<Vec<Option<Var>>> {
    if convs.len() != subgraphs.len() {
        return Err(Error::shape(
            "dual_aggregate",
            format!("{} convolutions for {} subgraphs", convs.len(), subgraphs.len()),
        ));
    }
    let mut incoming: Vec<Vec<Var>> = vec![Vec::new(); h.len()];
    for (conv, sub) in convs.iter().zip(subgraphs) {
        let (hs, hd) = (h[sub.src_type], h[sub.dst_type]);
        incoming[sub.dst_type].push(conv.forward(tape, store, &sub.graph, hs, hd)?);
    }
    incoming
        .into_iter()
        .enumerate()
        .map(|(t, outs)| match (outs.len(), macros.get(t).and_then(Option::as_ref)) {
            (0, _) => Ok(None),
            (_, Some(m)) => m.forward(tape, store, &outs).map(Some),
            (1, None) => Ok(Some(outs[0])),
            (_, None) => Err(Error::shape("dual_aggregate", format!("type slot {t} has no macro reducer"))),
        })
        .collect()
}

/// Representation of a type that received no messages in a layer. Under
/// SKIP-CAT the newest `hidden` columns are repeated so widths stay aligned
/// with the types that did aggregate.
pub fn pass_through(tape: &mut Tape, mode: Connectivity, h: Var, hidden: usize) -> Result<Var> {
    match mode {
        Connectivity::Stack | Connectivity::SkipSum => Ok(h),
        Connectivity::SkipCat => {
            let w = tape.shape(h)[1];
            if w < hidden {
                return Err(Error::shape("pass_through", format!("width {w} below hidden {hidden}")));
            }
            let last = tape.slice_cols(h, w - hidden, w)?;
            tape.concat(&[h, last], 1)
        }
    }
}

#[derive(Clone, Debug)]
pub enum Aggregation {
    Direct(MicroConv),
    Dual {
        convs: Vec<MicroConv>,
        macros: Vec<Option<MacroAgg>>,
    },
}

/// Aggregation, post-ops and connectivity of one message-passing layer.
#[derive(Clone, Debug)]
pub struct MpLayer {
    pub agg: Aggregation,
    pub post: PostOps,
    pub connect: Connectivity,
    pub in_dim: usize,
    pub hidden: usize,
}

impl MpLayer {
    /// A layer for graphs shaped like `layout`; the convolution instances
    /// mirror its subgraphs (dual) or the single homogenized graph (direct).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        init: &mut Init,
        name: &str,
        layout: &Layout,
        kind: ConvKind,
        macro_kind: Option<MacroKind>,
        form: AttentionForm,
        in_dim: usize,
        hidden: usize,
        post: PostOps,
        connect: Connectivity,
    ) -> Result<Self> {
        let agg = match layout {
            Layout::Direct { n_etypes, .. } => Aggregation::Direct(MicroConv::new(
                init,
                &format!("{name}.conv"),
                kind,
                in_dim,
                hidden,
                form,
                *n_etypes,
            )?),
            Layout::Dual { slots, n_types } => {
                let convs = slots
                    .iter()
                    .map(|s| {
                        MicroConv::new(
                            init,
                            &format!("{name}.conv.{}", s.name),
                            kind,
                            in_dim,
                            hidden,
                            AttentionForm::Gat,
                            1,
                        )
                    })
                    .collect::<Result<_>>()?;
                let macro_kind = macro_kind.unwrap_or(MacroKind::Sum);
                let macros = (0..*n_types)
                    .map(|t| {
                        if slots.iter().any(|s| s.dst_type == t) {
                            MacroAgg::new(init, &format!("{name}.macro{t}"), macro_kind, hidden).map(Some)
                        } else {
                            Ok(None)
                        }
                    })
                    .collect::<Result<_>>()?;
                Aggregation::Dual { convs, macros }
            }
        };
        Ok(MpLayer {
            agg,
            post,
            connect,
            in_dim,
            hidden,
        })
    }

    /// Width of every type's representation after this layer.
    pub fn out_dim(&self) -> usize {
        match self.connect {
            Connectivity::SkipCat => self.in_dim + self.hidden,
            _ => self.hidden,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &mut ParamStore,
        ctx: &mut ForwardCtx,
        graphs: &LayerGraphs,
        h: &[Var],
    ) -> Result<Vec<Var>> {
        let fresh: Vec<Option<Var>> = match (&self.agg, graphs) {
            (Aggregation::Direct(conv), LayerGraphs::Direct { graph, type_counts }) => {
                let global = tape.concat(h, 0)?;
                let out = direct_aggregate(tape, store, conv, graph, global)?;
                let mut start = 0;
                type_counts
                    .iter()
                    .map(|&n| {
                        let part = tape.slice_rows(out, start, start + n);
                        start += n;
                        part.map(Some)
                    })
                    .collect::<Result<_>>()?
            }
            (Aggregation::Dual { convs, macros }, LayerGraphs::Dual { subgraphs, .. }) => {
                dual_aggregate(tape, store, convs, macros, subgraphs, h)?
            }
            _ => return Err(Error::shape("mp_layer", "aggregation does not match the graph structure")),
        };
        fresh
            .into_iter()
            .zip(h)
            .enumerate()
            .map(|(t, (new, &prev))| match new {
                Some(new) => {
                    let new = intra_layer_post(tape, store, ctx, &self.post, t, new)?;
                    connect(tape, self.connect, prev, new)
                }
                None => pass_through(tape, self.connect, prev, self.hidden),
            })
            .collect()
    }
}
