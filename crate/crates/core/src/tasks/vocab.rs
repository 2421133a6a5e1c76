use std::collections::BTreeMap;

use crate::error::{CoreError, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SEP: u32 = 3;
const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<sep>"];

/// Character-level token map with four reserved framing ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    alphabet: String,
    to_id: BTreeMap<char, u32>,
    to_char: Vec<char>,
}

impl Vocabulary {
    pub fn new(alphabet: &str) -> Result<Self> {
        let mut to_id = BTreeMap::new();
        let mut to_char = Vec::new();
        for c in alphabet.chars() {
            if to_id
                .insert(c, RESERVED.len() as u32 + to_char.len() as u32)
                .is_some()
            {
                return Err(CoreError::Config(format!(
                    "character {c:?} repeated in alphabet"
                )));
            }
            to_char.push(c);
        }
        Ok(Self {
            alphabet: alphabet.to_string(),
            to_id,
            to_char,
        })
    }

    pub fn alphabet(&self) -> &str {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        RESERVED.len() + self.to_char.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, c: char) -> bool {
        self.to_id.contains_key(&c)
    }

    pub fn token(&self, c: char) -> Result<u32> {
        self.to_id.get(&c).copied().ok_or_else(|| {
            CoreError::Parse(format!(
                "character {c:?} is not in the vocabulary {:?}",
                self.alphabet
            ))
        })
    }

    /// Character tokens only, no framing.
    pub fn tokenize(&self, s: &str) -> Result<Vec<u32>> {
        s.chars().map(|c| self.token(c)).collect()
    }

    /// Inverse of [`tokenize`](Self::tokenize); framing ids are dropped.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter()
            .filter(|&&id| id as usize >= RESERVED.len())
            .filter_map(|&id| self.to_char.get(id as usize - RESERVED.len()))
            .collect()
    }

    pub fn name(&self, id: u32) -> String {
        match RESERVED.get(id as usize) {
            Some(r) => r.to_string(),
            None => self.detokenize(&[id]),
        }
    }

    /// `<bos> input <sep>`: the context the model answers from.
    pub fn frame_prompt(&self, input: &str) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(input.len() + 2);
        out.push(BOS);
        out.extend(self.tokenize(input)?);
        out.push(SEP);
        Ok(out)
    }

    /// Answer tokens followed by `<eos>`. With `reversed`, characters stream last-to-first.
    pub fn frame_target(&self, target: &str, reversed: bool) -> Result<Vec<u32>> {
        let mut out = self.tokenize(target)?;
        if reversed {
            out.reverse();
        }
        out.push(EOS);
        Ok(out)
    }

    /// Reads generated answer tokens (without `<eos>`) back into a string.
    pub fn read_answer(&self, ids: &[u32], reversed: bool) -> String {
        let s = self.detokenize(ids);
        if reversed {
            s.chars().rev().collect()
        } else {
            s
        }
    }
}
