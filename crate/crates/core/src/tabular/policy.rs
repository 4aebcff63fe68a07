use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView1};

use crate::distributions::{softmax, CategoricalDistribution};
use crate::error::{Error, Result};

/// Maps a token history to a row of the logit table using the last `order`
/// tokens. Missing history is padded with a begin-of-sequence symbol, so the
/// map is total over every history of every length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextMap {
    order: usize,
    alphabet_size: usize,
}

impl ContextMap {
    pub const MAX_ORDER: usize = 2;

    pub fn new(order: usize, alphabet_size: usize) -> Result<Self> {
        if order > Self::MAX_ORDER {
            return Err(Error::Config(format!(
                "context order {order} > {}",
                Self::MAX_ORDER
            )));
        }
        if alphabet_size < 2 {
            return Err(Error::Config(format!("alphabet size {alphabet_size} < 2")));
        }
        Ok(Self {
            order,
            alphabet_size,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// Symbol used for positions before the start of the sequence.
    pub fn bos(&self) -> usize {
        self.alphabet_size
    }

    pub fn num_contexts(&self) -> usize {
        (self.alphabet_size + 1).pow(self.order as u32)
    }

    /// Row for predicting the token that follows `history`.
    pub fn context_id(&self, history: &[usize]) -> usize {
        let radix = self.alphabet_size + 1;
        let mut id = 0;
        for back in 1..=self.order {
            let symbol = if history.len() >= back {
                history[history.len() - back]
            } else {
                self.bos()
            };
            debug_assert!(symbol <= self.alphabet_size);
            id = id * radix + symbol;
        }
        id
    }
}

/// Next-token model with one free softmax row per context.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    context: ContextMap,
    logits: Array2<f64>,
}

impl TabularPolicy {
    /// All-zero logits, i.e. uniform rows.
    pub fn uniform(context: ContextMap) -> Self {
        let logits = Array2::zeros((context.num_contexts(), context.alphabet_size()));
        Self { context, logits }
    }

    pub fn from_logits(context: ContextMap, logits: Array2<f64>) -> Result<Self> {
        let expected = (context.num_contexts(), context.alphabet_size());
        if logits.dim() != expected {
            return Err(Error::Config(format!(
                "logit table has shape {:?}, expected {expected:?}",
                logits.dim()
            )));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("logit table".into()));
        }
        Ok(Self { context, logits })
    }

    pub fn context_map(&self) -> &ContextMap {
        &self.context
    }

    pub fn alphabet_size(&self) -> usize {
        self.context.alphabet_size()
    }

    pub fn num_contexts(&self) -> usize {
        self.context.num_contexts()
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub(crate) fn logits_mut(&mut self) -> &mut Array2<f64> {
        &mut self.logits
    }

    pub fn row(&self, context: usize) -> ArrayView1<'_, f64> {
        self.logits.row(context)
    }

    /// `softmax(logits[context])`.
    pub fn probs(&self, context: usize) -> Vec<f64> {
        let row = self.logits.row(context);
        softmax(row.as_slice().expect("standard layout"))
    }

    /// `softmax(logits[context] / temperature)`; `temperature > 0`.
    pub fn tempered_probs(&self, context: usize, temperature: f64) -> Vec<f64> {
        let scaled: Vec<f64> = self
            .logits
            .row(context)
            .iter()
            .map(|l| l / temperature)
            .collect();
        softmax(&scaled)
    }

    pub fn distribution(&self, context: usize) -> Result<CategoricalDistribution> {
        CategoricalDistribution::from_logits(
            self.logits
                .row(context)
                .as_slice()
                .expect("standard layout"),
        )
    }

    pub fn prob(&self, context: usize, token: usize) -> f64 {
        self.probs(context)[token]
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{POLICY_HEADER}")?;
        writeln!(out, "order {}", self.context.order())?;
        writeln!(out, "alphabet {}", self.alphabet_size())?;
        for row in self.logits.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .filter(|r| match r {
                Ok((_, l)) => !l.trim().is_empty() && !l.trim_start().starts_with('#'),
                Err(_) => true,
            });
        let mut header = |key: &str| -> Result<usize> {
            let (lineno, line) = lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("missing `{key}` line"),
            })??;
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next().map(str::parse::<usize>)) {
                (Some(k), Some(Ok(v))) if k == key => Ok(v),
                _ => Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected `{key} <n>`"),
                }),
            }
        };
        let order = header("order")?;
        let alphabet = header("alphabet")?;
        let context = ContextMap::new(order, alphabet)?;
        let mut data = Vec::with_capacity(context.num_contexts() * alphabet);
        for row in lines {
            let (lineno, line) = row?;
            let values = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno,
                        msg: format!("{v}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != alphabet {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("row has {} entries, expected {alphabet}", values.len()),
                });
            }
            data.extend(values);
        }
        let rows = data.len() / alphabet;
        let logits = Array2::from_shape_vec((rows, alphabet), data).expect("length checked");
        Self::from_logits(context, logits)
    }
}

const POLICY_HEADER: &str = "# infosft-policy v1";
