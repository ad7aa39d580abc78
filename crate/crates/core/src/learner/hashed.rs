//! Desk-scale next-token learner: a log-linear model over hashed features,
//! trained with teacher forcing and decoded greedily.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::features::{Candidate, FeatureConfig, InputContext, StepFeatures};
use super::{Learner, TrainHyper};
use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::rehearsal::TrainStream;
use crate::text;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;

const MAGIC: &[u8; 4] = b"RKHL";
const VERSION: u32 = 2;
const RESCALE_BELOW: f64 = 1e-3;

/// Parameters, vocabulary and counters of the hashed n-gram learner.
///
/// Token features own a dense row over the vocabulary; relational features
/// own one scalar. Every stored weight is multiplied by a shared `scale`, so
/// L2 decay of all weights costs one multiplication per step.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedLearner {
    config: FeatureConfig,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    rows: HashMap<u32, Vec<f64>>,
    rel: HashMap<u32, f64>,
    scale: f64,
    rng_state: u64,
    step_count: u64,
}

/// Address of one trainable weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Param {
    /// Row `feature`, column `vocab_id`.
    Token { feature: u32, vocab_id: u32 },
    /// Scalar of a relational feature.
    Relation(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub loss: f64,
    pub tokens: usize,
}

impl HashedLearner {
    /// Zero weights over the sorted union of whitespace tokens in `sources`.
    pub fn new(seed: u64, sources: &[&Dataset], config: FeatureConfig) -> Result<Self> {
        if sources.is_empty() || sources.iter().all(|d| d.is_empty()) {
            return Err(Error::EmptyDataset("vocabulary source".into()));
        }
        if !(1..=30).contains(&config.hash_bits) || config.max_order == 0 {
            return Err(Error::invalid("hash_bits must be in 1..=30 and max_order >= 1"));
        }
        let mut words: Vec<&str> = sources
            .iter()
            .flat_map(|d| d.iter())
            .flat_map(|e| text::tokens(&e.input_text).into_iter().chain(text::tokens(&e.target_text)))
            .filter(|w| ![BOS, EOS, UNK].contains(w))
            .collect();
        words.sort_unstable();
        words.dedup();
        let vocab: Vec<String> = [BOS, EOS, UNK]
            .into_iter()
            .chain(words)
            .map(str::to_string)
            .collect();
        Ok(Self::from_parts(config, vocab, HashMap::new(), HashMap::new(), 1.0, seed, 0))
    }

    fn from_parts(
        config: FeatureConfig,
        vocab: Vec<String>,
        rows: HashMap<u32, Vec<f64>>,
        rel: HashMap<u32, f64>,
        scale: f64,
        rng_state: u64,
        step_count: u64,
    ) -> Self {
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Self {
            config,
            vocab,
            index,
            rows,
            rel,
            scale,
            rng_state,
            step_count,
        }
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn token_id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Effective (scaled) value of one weight.
    pub fn weight(&self, p: Param) -> f64 {
        let stored = match p {
            Param::Token { feature, vocab_id } => self.rows.get(&feature).map_or(0.0, |r| r[vocab_id as usize]),
            Param::Relation(g) => self.rel.get(&g).copied().unwrap_or(0.0),
        };
        stored * self.scale
    }

    pub fn set_weight(&mut self, p: Param, value: f64) {
        let v = self.vocab.len();
        let stored = value / self.scale;
        match p {
            Param::Token { feature, vocab_id } => {
                self.rows.entry(feature).or_insert_with(|| vec![0.0; v])[vocab_id as usize] = stored
            }
            Param::Relation(g) => {
                self.rel.insert(g, stored);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rows.values().flatten().all(|w| *w == 0.0) && self.rel.values().all(|w| *w == 0.0)
    }

    fn word_ids(&self, ctx: &InputContext) -> Vec<u32> {
        (0..ctx.len()).map(|i| self.token_id(ctx.word(i))).collect()
    }

    fn candidate_id(c: Candidate, word_ids: &[u32]) -> usize {
        match c {
            Candidate::Word(i) => word_ids[i] as usize,
            Candidate::Eos => EOS_ID as usize,
        }
    }

    /// Softmax over the vocabulary for the given active features. BOS gets zero mass.
    fn softmax(&self, features: &StepFeatures, word_ids: &[u32], out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.vocab.len(), 0.0);
        for f in &features.token {
            if let Some(row) = self.rows.get(f) {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += w;
                }
            }
        }
        for &(g, c) in &features.relational {
            if let Some(w) = self.rel.get(&g) {
                out[Self::candidate_id(c, word_ids)] += w;
            }
        }
        out[BOS_ID as usize] = f64::NEG_INFINITY;
        let mut max = f64::NEG_INFINITY;
        for o in out.iter_mut() {
            *o *= self.scale;
            max = max.max(*o);
        }
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }

    /// Next-token distribution after `prefix` (tokens already emitted, without BOS).
    pub fn next_token_distribution(&self, input: &str, prefix: &[&str]) -> Vec<f64> {
        let ctx = InputContext::new(input, &self.config);
        let ids = self.word_ids(&ctx);
        let mut feats = StepFeatures::default();
        let mut probs = Vec::new();
        ctx.step_features(prefix, &self.config, &mut feats);
        self.softmax(&feats, &ids, &mut probs);
        probs
    }

    /// Summed teacher-forced cross-entropy of one example and its gradient with
    /// respect to every effective weight it touches.
    pub fn loss_and_gradient(&self, input: &str, target: &str) -> (f64, BTreeMap<Param, f64>) {
        let mut grads = Grads::default();
        let stats = self.accumulate(input, target, 1.0, &mut grads);
        let mut out = BTreeMap::new();
        for (f, row) in grads.token {
            for (v, g) in row.into_iter().enumerate() {
                if g != 0.0 {
                    out.insert(
                        Param::Token {
                            feature: f,
                            vocab_id: v as u32,
                        },
                        g,
                    );
                }
            }
        }
        for (g, d) in grads.rel {
            if d != 0.0 {
                out.insert(Param::Relation(g), d);
            }
        }
        (stats.loss, out)
    }

    /// Summed cross-entropy of one example without gradients.
    pub fn example_loss(&self, input: &str, target: &str) -> f64 {
        let ctx = InputContext::new(input, &self.config);
        let ids = self.word_ids(&ctx);
        let toks = text::tokens(target);
        let mut feats = StepFeatures::default();
        let mut probs = Vec::new();
        let mut loss = 0.0;
        for t in 0..=toks.len() {
            ctx.step_features(&toks[..t], &self.config, &mut feats);
            self.softmax(&feats, &ids, &mut probs);
            let gold = toks.get(t).map_or(EOS_ID, |w| self.token_id(w));
            loss -= probs[gold as usize].ln();
        }
        loss
    }

    /// Adds `weight * d(loss)/d(w)` into `grads`; returns the summed loss.
    fn accumulate(&self, input: &str, target: &str, weight: f64, grads: &mut Grads) -> StepStats {
        let ctx = InputContext::new(input, &self.config);
        let ids = self.word_ids(&ctx);
        let toks = text::tokens(target);
        let v = self.vocab.len();
        let mut feats = StepFeatures::default();
        let mut probs = Vec::new();
        let mut loss = 0.0;
        for t in 0..=toks.len() {
            ctx.step_features(&toks[..t], &self.config, &mut feats);
            self.softmax(&feats, &ids, &mut probs);
            let gold = toks.get(t).map_or(EOS_ID, |w| self.token_id(w)) as usize;
            loss -= probs[gold].ln();
            for f in &feats.token {
                let row = grads.token.entry(*f).or_insert_with(|| vec![0.0; v]);
                for (g, p) in row.iter_mut().zip(&probs) {
                    *g += weight * p;
                }
                row[gold] -= weight;
            }
            for &(g, c) in &feats.relational {
                let y = Self::candidate_id(c, &ids);
                let d = probs[y] - if y == gold { 1.0 } else { 0.0 };
                *grads.rel.entry(g).or_insert(0.0) += weight * d;
            }
        }
        StepStats {
            loss,
            tokens: toks.len() + 1,
        }
    }

    fn apply(&mut self, grads: Grads, hyper: &TrainHyper) {
        let decay = 1.0 - hyper.learning_rate * hyper.l2;
        self.scale *= decay;
        let step = hyper.learning_rate / self.scale;
        let v = self.vocab.len();
        for (f, g) in grads.token {
            let row = self.rows.entry(f).or_insert_with(|| vec![0.0; v]);
            for (w, gi) in row.iter_mut().zip(g) {
                *w -= step * gi;
            }
        }
        for (f, g) in grads.rel {
            *self.rel.entry(f).or_insert(0.0) -= step * g;
        }
        if self.scale < RESCALE_BELOW {
            let s = self.scale;
            self.rows.values_mut().flatten().for_each(|w| *w *= s);
            self.rel.values_mut().for_each(|w| *w *= s);
            self.scale = 1.0;
        }
    }

    /// One SGD step on a batch; the objective is the mean per-token cross-entropy.
    pub fn train_batch<'a>(
        &mut self,
        batch: impl IntoIterator<Item = (&'a str, &'a str)>,
        hyper: &TrainHyper,
    ) -> Result<f64> {
        let pairs: Vec<(&str, &str)> = batch.into_iter().collect();
        let tokens: usize = pairs.iter().map(|(_, t)| text::tokens(t).len() + 1).sum();
        let mut grads = Grads::default();
        let mut loss = 0.0;
        let w = 1.0 / tokens.max(1) as f64;
        for (input, target) in &pairs {
            loss += self.accumulate(input, target, w, &mut grads).loss;
        }
        let mean = loss / tokens.max(1) as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step_count });
        }
        if hyper.learning_rate != 0.0 {
            self.apply(grads, hyper);
        }
        self.step_count += 1;
        Ok(mean)
    }

    /// Greedy decoding; ties go to the lowest vocabulary id.
    pub fn decode(&self, input: &str, max_len: usize) -> Vec<String> {
        let ctx = InputContext::new(input, &self.config);
        let ids = self.word_ids(&ctx);
        let mut out: Vec<String> = Vec::new();
        let mut feats = StepFeatures::default();
        let mut probs = Vec::new();
        while out.len() < max_len {
            let prefix: Vec<&str> = out.iter().map(String::as_str).collect();
            ctx.step_features(&prefix, &self.config, &mut feats);
            self.softmax(&feats, &ids, &mut probs);
            let mut best = 0usize;
            for (i, p) in probs.iter().enumerate() {
                if *p > probs[best] {
                    best = i;
                }
            }
            if best as u32 == EOS_ID {
                break;
            }
            out.push(self.vocab[best].clone());
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.vocab.len() as u32).to_le_bytes());
        buf.extend_from_slice(&self.config.dim().to_le_bytes());
        buf.extend_from_slice(&self.config.max_order.to_le_bytes());
        buf.extend_from_slice(&self.config.head_window.to_le_bytes());
        buf.extend_from_slice(&self.scale.to_le_bytes());
        buf.extend_from_slice(&self.rng_state.to_le_bytes());
        buf.extend_from_slice(&self.step_count.to_le_bytes());
        for w in &self.vocab {
            buf.extend_from_slice(&(w.len() as u32).to_le_bytes());
            buf.extend_from_slice(w.as_bytes());
        }
        let mut keys: Vec<u32> = self.rows.keys().copied().collect();
        keys.sort_unstable();
        let mut triples = Vec::new();
        for f in keys {
            for (v, w) in self.rows[&f].iter().enumerate() {
                if w.to_bits() != 0 {
                    triples.push((f, v as u32, *w));
                }
            }
        }
        buf.extend_from_slice(&(triples.len() as u64).to_le_bytes());
        for (f, v, w) in triples {
            buf.extend_from_slice(&f.to_le_bytes());
            buf.extend_from_slice(&v.to_le_bytes());
            buf.extend_from_slice(&w.to_le_bytes());
        }
        let mut rel: Vec<(u32, f64)> = self.rel.iter().filter(|(_, w)| w.to_bits() != 0).map(|(g, w)| (*g, *w)).collect();
        rel.sort_unstable_by_key(|(g, _)| *g);
        buf.extend_from_slice(&(rel.len() as u64).to_le_bytes());
        for (g, w) in rel {
            buf.extend_from_slice(&g.to_le_bytes());
            buf.extend_from_slice(&w.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(r.err(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.err(4, &format!("unsupported version {version}")));
        }
        let vocab_len = r.u32()? as usize;
        let dim = r.u32()?;
        if !dim.is_power_of_two() {
            return Err(r.err(12, "feature dimension is not a power of two"));
        }
        let config = FeatureConfig {
            hash_bits: dim.trailing_zeros(),
            max_order: r.u32()?,
            head_window: r.u32()?,
        };
        let scale = r.f64()?;
        let rng_state = r.u64()?;
        let step_count = r.u64()?;
        let mut vocab = Vec::with_capacity(vocab_len.min(1 << 20));
        for _ in 0..vocab_len {
            let n = r.u32()? as usize;
            let at = r.pos;
            let s = std::str::from_utf8(r.take(n)?).map(str::to_string).ok();
            vocab.push(s.ok_or_else(|| r.err(at, "vocabulary entry is not utf-8"))?);
        }
        if vocab.len() < 3 || vocab[0] != BOS || vocab[1] != EOS || vocab[2] != UNK {
            return Err(r.err(r.pos, "vocabulary lacks BOS/EOS/UNK"));
        }
        let n = r.u64()?;
        let mut rows: HashMap<u32, Vec<f64>> = HashMap::new();
        for _ in 0..n {
            let at = r.pos;
            let f = r.u32()?;
            let v = r.u32()? as usize;
            let w = r.f64()?;
            if f >= dim || v >= vocab_len || !w.is_finite() {
                return Err(r.err(at, "weight triple out of range"));
            }
            rows.entry(f).or_insert_with(|| vec![0.0; vocab_len])[v] = w;
        }
        let n = r.u64()?;
        let mut rel: HashMap<u32, f64> = HashMap::new();
        for _ in 0..n {
            let at = r.pos;
            let g = r.u32()?;
            let w = r.f64()?;
            if g >= dim || !w.is_finite() {
                return Err(r.err(at, "relational weight out of range"));
            }
            rel.insert(g, w);
        }
        if r.pos != bytes.len() {
            return Err(r.err(r.pos, "trailing bytes"));
        }
        Ok(Self::from_parts(config, vocab, rows, rel, scale, rng_state, step_count))
    }
}

#[derive(Default)]
struct Grads {
    token: HashMap<u32, Vec<f64>>,
    rel: HashMap<u32, f64>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn err(&self, offset: usize, message: &str) -> Error {
        Error::CorruptSnapshot {
            offset,
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(self.pos, "truncated payload"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Learner for HashedLearner {
    fn kind(&self) -> &str {
        super::HASHED_NGRAM
    }

    fn train_on_stream(&mut self, stream: &TrainStream, hyper: &TrainHyper) -> Result<Vec<f64>> {
        hyper.validate()?;
        if stream.is_empty() {
            return Err(Error::invalid("training stream is empty"));
        }
        stream
            .batches
            .iter()
            .map(|batch| {
                self.train_batch(
                    batch
                        .iter()
                        .map(|i| (i.example.input_text.as_str(), i.example.target_text.as_str())),
                    hyper,
                )
            })
            .collect()
    }

    fn generate(&self, input: &str, max_len: usize) -> String {
        self.decode(input, max_len).join(" ")
    }

    fn snapshot(&self) -> Vec<u8> {
        self.to_bytes()
    }

    fn boxed_clone(&self) -> Box<dyn Learner> {
        Box::new(self.clone())
    }

    fn step_count(&self) -> u64 {
        self.step_count
    }
}
