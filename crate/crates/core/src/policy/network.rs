use rand::Rng;
use serde::{Deserialize, Serialize};

use super::actions::ActionCand;
use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId, RelationVocab};
use crate::nd::{init_weight, LstmState, ParamId, ParamStore, StackedLstm, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    /// Entity and relation embedding size `d`.
    pub embed: usize,
    /// LSTM hidden size.
    pub hidden: usize,
    pub lstm_layers: usize,
    /// Width of the scoring MLP.
    pub mlp: usize,
}

impl PolicyDims {
    pub fn new(embed: usize) -> Self {
        Self {
            embed,
            hidden: embed,
            lstm_layers: 2,
            mlp: embed,
        }
    }
}

/// Stage-1 parameters: its own embeddings, the path LSTM and the two
/// scoring matrices.
#[derive(Debug, Clone)]
pub struct Stage1Params {
    pub store: ParamStore,
    pub entity: ParamId,
    pub relation: ParamId,
    pub lstm: StackedLstm,
    /// `(2d + d_h) × d_mlp`.
    pub w1: ParamId,
    /// `2d × d_mlp`.
    pub w2: ParamId,
    pub dims: PolicyDims,
    pub vocab: RelationVocab,
}

fn missing(name: &str) -> Error {
    Error::Checkpoint(format!("missing stage-1 parameter {name:?}"))
}

impl Stage1Params {
    pub fn init<R: Rng + ?Sized>(
        num_entities: usize,
        vocab: RelationVocab,
        dims: PolicyDims,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.embed == 0 || dims.hidden == 0 || dims.mlp == 0 || dims.lstm_layers == 0 {
            return Err(Error::Config(format!("policy dimensions must be positive: {dims:?}")));
        }
        let d = dims.embed;
        let bound = 1.0 / (d as f64).sqrt();
        let mut store = ParamStore::new();
        let entity = store.add("entity", Tensor::uniform(num_entities, d, bound, rng))?;
        let relation = store.add("relation", Tensor::uniform(vocab.extended_size(), d, bound, rng))?;
        let lstm = StackedLstm::init(&mut store, "lstm", 2 * d, dims.hidden, dims.lstm_layers, rng)?;
        let w1 = store.add("w1", init_weight(2 * d + dims.hidden, dims.mlp, rng))?;
        let w2 = store.add("w2", init_weight(2 * d, dims.mlp, rng))?;
        Ok(Self {
            store,
            entity,
            relation,
            lstm,
            w1,
            w2,
            dims,
            vocab,
        })
    }

    /// Rebinds handles after the store was restored from a checkpoint.
    pub fn from_store(store: ParamStore, vocab: RelationVocab, lstm_layers: usize) -> Result<Self> {
        let entity = store.id("entity").ok_or_else(|| missing("entity"))?;
        let relation = store.id("relation").ok_or_else(|| missing("relation"))?;
        let w1 = store.id("w1").ok_or_else(|| missing("w1"))?;
        let w2 = store.id("w2").ok_or_else(|| missing("w2"))?;
        let lstm = StackedLstm::from_store(&store, "lstm", lstm_layers)?;
        let d = store.get(entity).cols();
        let dims = PolicyDims {
            embed: d,
            hidden: lstm.hidden(),
            lstm_layers,
            mlp: store.get(w1).cols(),
        };
        if store.get(relation).shape() != [vocab.extended_size(), d]
            || store.get(w1).rows() != 2 * d + dims.hidden
            || store.get(w2).shape() != [2 * d, dims.mlp]
        {
            return Err(Error::Checkpoint("stage-1 parameter shapes are inconsistent".into()));
        }
        Ok(Self {
            store,
            entity,
            relation,
            lstm,
            w1,
            w2,
            dims,
            vocab,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.store.get(self.entity).rows()
    }

    fn step_input(&self, tape: &mut Tape<'_>, rel: RelationId, ent: EntityId) -> Result<Var> {
        let r = tape.lookup(self.relation, &[rel as usize])?;
        let e = tape.lookup(self.entity, &[ent as usize])?;
        tape.concat_cols(&[r, e])
    }

    /// `h_0 = LSTM(0, r_dummy ⊕ e_s)`.
    pub fn start_state(&self, tape: &mut Tape<'_>, subject: EntityId) -> Result<LstmState> {
        let x = self.step_input(tape, self.vocab.dummy_start(), subject)?;
        let zero = self.lstm.zero_state(tape);
        self.lstm.step(tape, x, &zero)
    }

    /// `h_{i+1} = LSTM(h_i, r' ⊕ e')` after taking `action`.
    pub fn advance(&self, tape: &mut Tape<'_>, prev: &LstmState, action: &ActionCand) -> Result<LstmState> {
        let x = self.step_input(tape, action.relation, action.entity)?;
        self.lstm.step(tape, x, prev)
    }

    /// Log-probabilities `1 × |A|` of the candidate actions:
    /// `log softmax(A W2 relu(W1 [e_i ⊕ h_i ⊕ r_q]))`, where row `j` of `A`
    /// is `r'_j ⊕ e'_j`.
    pub fn action_log_probs(
        &self,
        tape: &mut Tape<'_>,
        current: EntityId,
        h: Var,
        query_relation: RelationId,
        actions: &[ActionCand],
    ) -> Result<Var> {
        if actions.is_empty() {
            return Err(Error::Invalid("action set is empty".into()));
        }
        let e = tape.lookup(self.entity, &[current as usize])?;
        let rq = tape.lookup(self.relation, &[query_relation as usize])?;
        let x = tape.concat_cols(&[e, h, rq])?;
        let w1 = tape.param(self.w1);
        let hidden = tape.matmul(x, w1)?;
        let hidden = tape.relu(hidden);
        // q = hidden W2ᵀ (1 × 2d), then scores = q Aᵀ
        let w2 = tape.param(self.w2);
        let w2t = tape.transpose(w2);
        let q = tape.matmul(hidden, w2t)?;
        let rels: Vec<usize> = actions.iter().map(|a| a.relation as usize).collect();
        let ents: Vec<usize> = actions.iter().map(|a| a.entity as usize).collect();
        let ar = tape.lookup(self.relation, &rels)?;
        let ae = tape.lookup(self.entity, &ents)?;
        let a = tape.concat_cols(&[ar, ae])?;
        let at = tape.transpose(a);
        let scores = tape.matmul(q, at)?;
        Ok(tape.log_softmax(scores))
    }
}
