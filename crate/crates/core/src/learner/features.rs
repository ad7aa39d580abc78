//! Hashed feature extraction for the next-token model.
//!
//! At every decoding step the model sees:
//! - a bias and the word n-grams of the instruction (orders `1..=max_order`),
//! - n-grams of the output prefix ending at the last emitted token,
//! - pointer features around the anchor (the most recent emitted token found
//!   unquoted in the instruction): its neighbours and an identity-free
//!   position bucket; without an anchor, the payload's leading and trailing
//!   words instead,
//! - relational features, each voting for one concrete candidate token: the
//!   anchor's neighbours, leading/trailing payload words, quoted words not yet
//!   emitted, and the next payload word in lexical order,
//! - all prefix and pointer features again, conjoined with each of the first
//!   `head_window` unquoted words before the payload.
//!
//! The instruction payload starts after the last token ending in `:`; position
//! features at the first step are relative to it. A pointer that steps off the
//! payload (past its end, or back into the instruction words) votes for EOS.
//! Step features are split by whether the prompt contains quoted words, so
//! keyword tasks and plain rewriting tasks never share buckets.

use serde::{Deserialize, Serialize};

use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Highest word n-gram order (orders 1 through this value are used).
    pub max_order: u32,
    /// Feature space is `2^hash_bits` buckets.
    pub hash_bits: u32,
    /// Leading unquoted prompt words that every prefix/pointer feature is conjoined with.
    pub head_window: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            max_order: 3,
            hash_bits: 18,
            head_window: 3,
        }
    }
}

impl FeatureConfig {
    pub fn dim(&self) -> u32 {
        1u32 << self.hash_bits
    }

    fn mask(&self) -> u64 {
        u64::from(self.dim()) - 1
    }
}

const SEP: u8 = 0x1f;
const START: &str = "<s>";
const END: &str = "</s>";
const POSITIONS: usize = 4;

struct Key(u64);

impl Key {
    fn new(tag: &str) -> Self {
        let mut k = Key(0xcbf2_9ce4_8422_2325);
        k.push(tag);
        k
    }

    fn push(&mut self, part: &str) -> &mut Self {
        for b in part.bytes().chain(std::iter::once(SEP)) {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
        self
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

fn conj(head: u64, base: u64) -> u64 {
    let mut x = base ^ head.rotate_left(29) ^ 0x9e37_79b9_7f4a_7c15;
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Per-input precomputation shared by all decoding steps.
pub struct InputContext {
    words: Vec<String>,
    quoted: Vec<bool>,
    payload_start: usize,
    static_keys: Vec<u64>,
    head_keys: Vec<u64>,
}

impl InputContext {
    pub fn new(input: &str, cfg: &FeatureConfig) -> Self {
        let raw = text::tokens(input);
        let words: Vec<String> = raw.iter().map(|t| text::strip_punct(t).to_string()).collect();
        let quoted: Vec<bool> = raw
            .iter()
            .map(|t| {
                let t = t.trim_end_matches([':', ',', '.', ';']);
                t.len() >= 2 && (t.starts_with('"') && t.ends_with('"') || t.starts_with('\'') && t.ends_with('\''))
            })
            .collect();
        let payload_start = raw.iter().rposition(|t| t.ends_with(':')).map_or(0, |i| i + 1);

        let mut static_keys = vec![Key::new("bias").finish()];
        for order in 1..=cfg.max_order as usize {
            for gram in words.windows(order) {
                let mut k = Key::new("in");
                for w in gram {
                    k.push(w);
                }
                static_keys.push(k.finish());
            }
        }
        let head_keys = words[..payload_start]
            .iter()
            .zip(&quoted)
            .filter(|(_, q)| !**q)
            .take(cfg.head_window as usize)
            .enumerate()
            .map(|(i, (w, _))| Key::new("head").push(&i.to_string()).push(w).finish())
            .collect();
        Self {
            words,
            quoted,
            payload_start,
            static_keys,
            head_keys,
        }
    }

    /// Position of `token` in the instruction, preferring unquoted occurrences.
    fn locate(&self, token: &str) -> Option<usize> {
        let mut quoted_hit = None;
        for (i, w) in self.words.iter().enumerate() {
            if w == token {
                if !self.quoted[i] {
                    return Some(i);
                }
                quoted_hit.get_or_insert(i);
            }
        }
        quoted_hit
    }

    /// Unquoted instruction position of the most recent prefix token that has one.
    fn anchor(&self, prefix: &[&str]) -> Option<usize> {
        prefix
            .iter()
            .rev()
            .find_map(|t| self.locate(t).filter(|&j| !self.quoted[j]))
    }

    fn word_at(&self, i: isize) -> (&str, bool) {
        if i < 0 {
            (START, false)
        } else if i as usize >= self.words.len() {
            (END, false)
        } else {
            (&self.words[i as usize], self.quoted[i as usize])
        }
    }

    /// Identity-free description of where position `j` sits in the payload.
    fn bucket(&self, j: usize) -> String {
        let from_start = if j < self.payload_start {
            "h".to_string()
        } else {
            (j - self.payload_start).min(POSITIONS - 1).to_string()
        };
        let from_end = (self.words.len() - 1 - j).min(2);
        format!("{from_start}/{from_end}")
    }

    /// Feature buckets for predicting the token after `prefix` (`prefix` excludes BOS).
    pub fn step_features(&self, prefix: &[&str], cfg: &FeatureConfig, out: &mut StepFeatures) {
        out.token.clear();
        out.relational.clear();
        let mask = cfg.mask();
        let mut dynamic: Vec<u64> = Vec::with_capacity(24);
        let mut rel: Vec<(u64, Candidate)> = Vec::with_capacity(16);

        // prefix n-grams ending at the last token
        let padded: Vec<&str> = std::iter::once(START).chain(prefix.iter().copied()).collect();
        for order in 1..=cfg.max_order as usize {
            if order > padded.len() {
                break;
            }
            let mut k = Key::new("out");
            for w in &padded[padded.len() - order..] {
                k.push(w);
            }
            dynamic.push(k.finish());
        }

        // state of the last emitted token
        let state = match prefix.last() {
            None => "s",
            Some(last) => match self.locate(last) {
                None => "x",
                Some(j) if j + 1 == self.words.len() => "e",
                Some(_) => "m",
            },
        };
        dynamic.push(Key::new("state").push(state).finish());

        let anchor = self.anchor(prefix);
        let where_ = anchor.map_or_else(|| "none".to_string(), |j| self.bucket(j));
        dynamic.push(Key::new("anchor").push(state).push(&where_).finish());
        let framing = if self.quoted.contains(&true) { "k" } else { "" };
        let rel_key = |name: &str| Key::new("rel").push(name).push(state).push(&where_).push(framing).finish();
        match anchor {
            None => {
                for i in 0..POSITIONS {
                    let at = self.payload_start + i;
                    let (w, q) = self.word_at(at as isize);
                    dynamic.push(
                        Key::new("pos")
                            .push(state)
                            .push(&i.to_string())
                            .push(w)
                            .push(if q { "q" } else { "" })
                            .finish(),
                    );
                    if at < self.words.len() {
                        rel.push((rel_key(&format!("pos{i}")), Candidate::Word(at)));
                    }
                }
                for k in 1..=2usize {
                    if let Some(at) = self.words.len().checked_sub(k).filter(|&a| a >= self.payload_start) {
                        dynamic.push(Key::new("from_end").push(state).push(&k.to_string()).push(&self.words[at]).finish());
                        rel.push((rel_key(&format!("end{k}")), Candidate::Word(at)));
                    }
                }
            }
            Some(j) => {
                for (name, off) in [("n1", 1isize), ("n2", 2), ("b1", -1), ("b2", -2)] {
                    let at = j as isize + off;
                    let (w, q) = self.word_at(at);
                    dynamic.push(
                        Key::new("ptr")
                            .push(state)
                            .push(name)
                            .push(w)
                            .push(if q { "q" } else { "" })
                            .finish(),
                    );
                    let c = if at as usize == self.words.len() || at == self.payload_start as isize - 1 {
                        Some(Candidate::Eos)
                    } else if at >= 0 && (at as usize) < self.words.len() && !self.quoted[at as usize] {
                        Some(Candidate::Word(at as usize))
                    } else {
                        None
                    };
                    if let Some(c) = c {
                        rel.push((rel_key(name), c));
                    }
                }
            }
        }

        // quoted words, split by whether they were already emitted
        for (i, (w, _)) in self.words.iter().zip(&self.quoted).enumerate().filter(|(_, (_, q))| **q) {
            let used = prefix.contains(&w.as_str());
            let name = if used { "q_used" } else { "q_new" };
            rel.push((rel_key(name), Candidate::Word(i)));
            rel.push((Key::new("rel").push(name).push(&where_).finish(), Candidate::Word(i)));
        }

        // next payload word in lexical order after the last emitted one
        let floor = prefix.last().copied().unwrap_or("");
        let next_sorted = (self.payload_start..self.words.len())
            .filter(|&i| !self.quoted[i] && self.words[i].as_str() > floor && !prefix.contains(&self.words[i].as_str()))
            .min_by(|&a, &b| self.words[a].cmp(&self.words[b]));
        match next_sorted {
            Some(i) => rel.push((rel_key("sorted_next"), Candidate::Word(i))),
            None => rel.push((rel_key("sorted_done"), Candidate::Eos)),
        }

        out.token.extend(self.static_keys.iter().map(|k| (k & mask) as u32));
        // prompts with and without quoted words never share dynamic buckets
        let frame = Key::new("framing").push(framing).finish();
        for &d in &dynamic {
            let d = conj(frame, d);
            out.token.push((d & mask) as u32);
            for &h in &self.head_keys {
                out.token.push((conj(h, d) & mask) as u32);
            }
        }
        out.token.sort_unstable();
        out.token.dedup();
        for (d, c) in rel {
            out.relational.push(((d & mask) as u32, c));
            for &h in &self.head_keys {
                out.relational.push(((conj(h, d) & mask) as u32, c));
            }
        }
        out.relational.sort_unstable();
        out.relational.dedup();
    }

    /// Instruction word at `i` as the decoder would emit it.
    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Output token a relational feature votes for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Candidate {
    /// The instruction word at this index.
    Word(usize),
    Eos,
}

/// Active features at one decoding step.
///
/// `token` features carry a weight per vocabulary entry; each `relational`
/// pair carries one scalar weight that is added to the score of its candidate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepFeatures {
    pub token: Vec<u32>,
    pub relational: Vec<(u32, Candidate)>,
}
