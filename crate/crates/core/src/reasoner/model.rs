use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::clues::{ClueGraph, ClueGraphSequence};
use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId, RelationVocab};
use crate::nd::{gru_cell, init_weight, sigmoid, GruCell, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonerDims {
    /// Embedding size `d`.
    pub embed: usize,
    /// GRU hidden size `d_H`.
    pub hidden: usize,
    /// RGCN depth `ω`.
    pub layers: usize,
    /// Basis count for the relation weights; `None` keeps one full matrix
    /// per relation.
    pub num_bases: Option<usize>,
}

impl ReasonerDims {
    pub fn new(embed: usize) -> Self {
        Self {
            embed,
            hidden: embed,
            layers: 2,
            num_bases: None,
        }
    }
}

#[derive(Debug, Clone)]
enum RelWeights {
    Full(Vec<ParamId>),
    /// `coeff`: `|R| × B`, `bases`: `B × d²`.
    Basis {
        coeff: ParamId,
        bases: ParamId,
    },
}

#[derive(Debug, Clone)]
struct RgcnLayer {
    rel: RelWeights,
    self_loop: ParamId,
}

/// Stage-2 parameters, independent of the Stage-1 tables.
#[derive(Debug, Clone)]
pub struct Stage2Params {
    pub store: ParamStore,
    pub entity: ParamId,
    pub relation: ParamId,
    layers: Vec<RgcnLayer>,
    pub gru: GruCell,
    /// `d_H × |E|`, no bias.
    pub decoder: ParamId,
    pub dims: ReasonerDims,
    pub vocab: RelationVocab,
}

fn fetch(store: &ParamStore, name: &str) -> Result<ParamId> {
    store
        .id(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing stage-2 parameter {name:?}")))
}

impl Stage2Params {
    /// Embeddings and RGCN/GRU weights are drawn uniformly; the decoder
    /// starts at zero, so an untrained model scores every entity 0.5.
    pub fn init<R: Rng + ?Sized>(
        num_entities: usize,
        vocab: RelationVocab,
        dims: ReasonerDims,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.embed == 0 || dims.hidden == 0 || dims.layers == 0 || dims.num_bases == Some(0) {
            return Err(Error::Config(format!("reasoner dimensions must be positive: {dims:?}")));
        }
        let d = dims.embed;
        let nrel = vocab.extended_size();
        let bound = 1.0 / (d as f64).sqrt();
        let mut store = ParamStore::new();
        let entity = store.add("entity", Tensor::uniform(num_entities, d, bound, rng))?;
        let relation = store.add("relation", Tensor::uniform(nrel, d, bound, rng))?;
        let mut layers = Vec::with_capacity(dims.layers);
        for l in 0..dims.layers {
            let rel = match dims.num_bases {
                None => RelWeights::Full(
                    (0..nrel)
                        .map(|r| store.add(format!("rgcn.l{l}.rel{r}"), init_weight(d, d, rng)))
                        .collect::<Result<_>>()?,
                ),
                Some(b) => {
                    let coeff = store.add(
                        format!("rgcn.l{l}.coeff"),
                        Tensor::uniform(nrel, b, 1.0 / (b as f64).sqrt(), rng),
                    )?;
                    let bases = store.add(format!("rgcn.l{l}.bases"), Tensor::uniform(b, d * d, bound, rng))?;
                    RelWeights::Basis { coeff, bases }
                }
            };
            let self_loop = store.add(format!("rgcn.l{l}.loop"), init_weight(d, d, rng))?;
            layers.push(RgcnLayer { rel, self_loop });
        }
        let gru = GruCell::init(&mut store, "gru", 3 * d, dims.hidden, rng)?;
        let decoder = store.add("decoder", Tensor::zeros(dims.hidden, num_entities))?;
        Ok(Self {
            store,
            entity,
            relation,
            layers,
            gru,
            decoder,
            dims,
            vocab,
        })
    }

    /// Rebinds handles after loading; depth and basis mode are read from
    /// the parameter names.
    pub fn from_store(store: ParamStore, vocab: RelationVocab) -> Result<Self> {
        let entity = fetch(&store, "entity")?;
        let relation = fetch(&store, "relation")?;
        let d = store.get(entity).cols();
        let nrel = vocab.extended_size();
        if store.get(relation).shape() != [nrel, d] {
            return Err(Error::Checkpoint("stage-2 relation table does not match vocab".into()));
        }
        let mut layers = Vec::new();
        let mut num_bases = None;
        while let Some(self_loop) = store.id(&format!("rgcn.l{}.loop", layers.len())) {
            let l = layers.len();
            let rel = match store.id(&format!("rgcn.l{l}.coeff")) {
                Some(coeff) => {
                    num_bases = Some(store.get(coeff).cols());
                    RelWeights::Basis {
                        coeff,
                        bases: fetch(&store, &format!("rgcn.l{l}.bases"))?,
                    }
                }
                None => RelWeights::Full(
                    (0..nrel)
                        .map(|r| fetch(&store, &format!("rgcn.l{l}.rel{r}")))
                        .collect::<Result<_>>()?,
                ),
            };
            layers.push(RgcnLayer { rel, self_loop });
        }
        if layers.is_empty() {
            return Err(Error::Checkpoint("stage-2 store has no RGCN layers".into()));
        }
        let gru = GruCell::from_store(&store, "gru")?;
        let decoder = fetch(&store, "decoder")?;
        let dims = ReasonerDims {
            embed: d,
            hidden: gru.hidden,
            layers: layers.len(),
            num_bases,
        };
        if gru.input != 3 * d || store.get(decoder).shape() != [gru.hidden, store.get(entity).rows()] {
            return Err(Error::Checkpoint("stage-2 parameter shapes are inconsistent".into()));
        }
        Ok(Self {
            store,
            entity,
            relation,
            layers,
            gru,
            decoder,
            dims,
            vocab,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.store.get(self.entity).rows()
    }

    fn relation_weight(&self, tape: &mut Tape<'_>, layer: usize, r: RelationId) -> Result<Var> {
        match &self.layers[layer].rel {
            RelWeights::Full(ws) => {
                let id = *ws.get(r as usize).ok_or(Error::OutOfRange {
                    what: "relation",
                    index: r as usize,
                    size: ws.len(),
                })?;
                Ok(tape.param(id))
            }
            RelWeights::Basis { coeff, bases } => {
                let a = tape.lookup(*coeff, &[r as usize])?;
                let v = tape.param(*bases);
                let flat = tape.matmul(a, v)?;
                let d = self.dims.embed;
                tape.reshape(flat, d, d)
            }
        }
    }

    /// `ω` layers of `h_o ← relu((1/d_o) Σ_{(s,r,o)} h_s W_r + h_o W_loop)`
    /// over the entities of `graph`. Returns the entity ids (ascending) and
    /// their final embeddings, one row each.
    pub fn rgcn_forward(&self, tape: &mut Tape<'_>, graph: &ClueGraph) -> Result<(Vec<EntityId>, Var)> {
        let nodes = graph.entities();
        let h = self.rgcn_nodes(tape, &nodes, &graph.edges)?;
        Ok((nodes, h))
    }

    /// RGCN over an explicit node list; every edge endpoint must be listed.
    pub fn rgcn_nodes(
        &self,
        tape: &mut Tape<'_>,
        nodes: &[EntityId],
        edges: &[(EntityId, RelationId, EntityId)],
    ) -> Result<Var> {
        let local: HashMap<EntityId, usize> = nodes.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let ids: Vec<usize> = nodes.iter().map(|&e| e as usize).collect();
        let mut h = tape.lookup(self.entity, &ids)?;
        let mut in_degree = vec![0usize; nodes.len()];
        let mut by_rel: HashMap<RelationId, (Vec<usize>, Vec<usize>)> = HashMap::new();
        for &(s, r, o) in edges {
            let (Some(&ls), Some(&lo)) = (local.get(&s), local.get(&o)) else {
                return Err(Error::Invalid(format!("edge ({s}, {r}, {o}) leaves the node list")));
            };
            in_degree[lo] += 1;
            let e = by_rel.entry(r).or_default();
            e.0.push(ls);
            e.1.push(lo);
        }
        let mut rels: Vec<_> = by_rel.into_iter().collect();
        rels.sort_unstable_by_key(|(r, _)| *r);
        for l in 0..self.layers.len() {
            let w_loop = tape.param(self.layers[l].self_loop);
            let mut acc = tape.matmul(h, w_loop)?;
            for (r, (srcs, dsts)) in &rels {
                let w = self.relation_weight(tape, l, *r)?;
                let hs = tape.gather_rows(h, srcs)?;
                let msg = tape.matmul(hs, w)?;
                let weights: Vec<f64> = dsts.iter().map(|&o| 1.0 / in_degree[o] as f64).collect();
                let agg = tape.scatter_rows(msg, dsts, &weights, nodes.len())?;
                acc = tape.add(acc, agg)?;
            }
            h = tape.relu(acc);
        }
        Ok(h)
    }

    /// Mean of the final RGCN embeddings of the graph's entities.
    pub fn graph_embedding(&self, tape: &mut Tape<'_>, graph: &ClueGraph) -> Result<Var> {
        if graph.edges.is_empty() {
            return Err(Error::Invalid(format!("empty clue graph at t = {}", graph.time)));
        }
        let (_, h) = self.rgcn_forward(tape, graph)?;
        tape.mean_rows(h)
    }

    /// Runs the GRU over `[ê_s ⊕ ĝ_j ⊕ r̂_q]` from `H = 0`; returns the final
    /// state and the per-graph embeddings.
    pub fn encode_sequence_with(&self, tape: &mut Tape<'_>, seq: &ClueGraphSequence) -> Result<(Var, Vec<Var>)> {
        let q = &seq.query;
        let mut h = tape.constant(Tensor::zeros(1, self.dims.hidden));
        if seq.is_empty() {
            return Ok((h, Vec::new()));
        }
        let es = tape.lookup(self.entity, &[q.subject as usize])?;
        let rq = tape.lookup(self.relation, &[q.relation as usize])?;
        let mut gs = Vec::with_capacity(seq.len());
        for g in &seq.graphs {
            if g.time >= q.time {
                return Err(Error::Invalid(format!(
                    "clue graph at t = {} is not before the query time {}",
                    g.time, q.time
                )));
            }
            let ge = self.graph_embedding(tape, g)?;
            gs.push(ge);
            let x = tape.concat_cols(&[es, ge, rq])?;
            h = gru_cell(tape, x, h, &self.gru)?;
        }
        Ok((h, gs))
    }

    pub fn encode_sequence(&self, tape: &mut Tape<'_>, seq: &ClueGraphSequence) -> Result<Var> {
        Ok(self.encode_sequence_with(tape, seq)?.0)
    }

    /// `H · W_mlp`, one logit per entity.
    pub fn logits(&self, tape: &mut Tape<'_>, h: Var) -> Result<Var> {
        let w = tape.param(self.decoder);
        tape.matmul(h, w)
    }

    pub fn forward(&self, tape: &mut Tape<'_>, seq: &ClueGraphSequence) -> Result<Var> {
        let h = self.encode_sequence(tape, seq)?;
        self.logits(tape, h)
    }

    /// Sigmoid scores without recording a tape.
    pub fn score(&self, seq: &ClueGraphSequence) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.store);
        let logits = self.forward(&mut tape, seq)?;
        Ok(score_entities(tape.value(logits)))
    }
}

/// Elementwise sigmoid of a `1 × |E|` logit row.
pub fn score_entities(logits: &Tensor) -> Vec<f64> {
    logits.data().iter().map(|&x| sigmoid(x)).collect()
}

/// `−log softmax(logits)[target]`.
pub fn ce_loss(tape: &mut Tape<'_>, logits: Var, target: EntityId) -> Result<Var> {
    let lp = tape.log_softmax(logits);
    let picked = tape.pick(lp, 0, target as usize)?;
    Ok(tape.scale(picked, -1.0))
}

/// The Stage-2 score of a beam's terminal entity.
pub fn beam_reward(scores: &[f64], destination: EntityId) -> Result<f64> {
    scores.get(destination as usize).copied().ok_or(Error::OutOfRange {
        what: "entity",
        index: destination as usize,
        size: scores.len(),
    })
}
