use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::ContextMap;
use crate::error::{Error, Result};

/// A prompt followed by a response; only response tokens are scored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    pub tokens: Vec<usize>,
    pub prompt_len: usize,
}

impl Sequence {
    pub fn new(tokens: Vec<usize>, prompt_len: usize) -> Self {
        Self { tokens, prompt_len }
    }

    pub fn prompt(&self) -> &[usize] {
        &self.tokens[..self.prompt_len]
    }

    pub fn response(&self) -> &[usize] {
        &self.tokens[self.prompt_len..]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceDataset {
    alphabet_size: usize,
    sequences: Vec<Sequence>,
}

/// One response position: the row it conditions on and the token it scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoredToken {
    pub sequence: usize,
    pub context: usize,
    pub token: usize,
}

impl SequenceDataset {
    pub fn new(alphabet_size: usize, sequences: Vec<Sequence>) -> Result<Self> {
        for (i, seq) in sequences.iter().enumerate() {
            if let Some(&t) = seq.tokens.iter().find(|&&t| t >= alphabet_size) {
                return Err(Error::Config(format!(
                    "sequence {i}: token {t} >= alphabet size {alphabet_size}"
                )));
            }
            if seq.tokens.len() < seq.prompt_len + 1 {
                return Err(Error::EmptyResponse(i));
            }
        }
        Ok(Self {
            alphabet_size,
            sequences,
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Every response position of every sequence, in order.
    pub fn scored_tokens(&self, map: &ContextMap) -> Vec<ScoredToken> {
        let mut out = Vec::new();
        for (i, seq) in self.sequences.iter().enumerate() {
            for t in seq.prompt_len..seq.tokens.len() {
                out.push(ScoredToken {
                    sequence: i,
                    context: map.context_id(&seq.tokens[..t]),
                    token: seq.tokens[t],
                });
            }
        }
        out
    }

    /// How many scored positions condition on each context, sorted by context.
    pub fn context_counts(&self, map: &ContextMap) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for tok in self.scored_tokens(map) {
            *counts.entry(tok.context).or_insert(0) += 1;
        }
        counts
    }

    /// Distinct scored contexts in increasing order.
    pub fn contexts(&self, map: &ContextMap) -> Vec<usize> {
        self.context_counts(map).into_keys().collect()
    }

    pub fn prompts(&self) -> Vec<Vec<usize>> {
        self.sequences.iter().map(|s| s.prompt().to_vec()).collect()
    }

    /// Header `alphabet K`, then one line per sequence:
    /// `<prompt_len> <t_0> <t_1> ...`.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{DATASET_HEADER}")?;
        writeln!(out, "alphabet {}", self.alphabet_size)?;
        for seq in &self.sequences {
            write!(out, "{}", seq.prompt_len)?;
            for t in &seq.tokens {
                write!(out, " {t}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut alphabet = None;
        let mut sequences = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: lineno, msg };
            if alphabet.is_none() {
                let k = trimmed
                    .strip_prefix("alphabet")
                    .ok_or_else(|| perr("expected `alphabet <K>`".into()))?
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| perr(e.to_string()))?;
                alphabet = Some(k);
                continue;
            }
            let nums = trimmed
                .split_whitespace()
                .map(|f| f.parse::<usize>().map_err(|e| perr(format!("{f}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            sequences.push(Sequence::new(nums[1..].to_vec(), nums[0]));
        }
        let alphabet = alphabet.ok_or(Error::Parse {
            line: 0,
            msg: "missing `alphabet <K>` line".into(),
        })?;
        Self::new(alphabet, sequences)
    }
}

const DATASET_HEADER: &str = "# infosft-dataset v1";
