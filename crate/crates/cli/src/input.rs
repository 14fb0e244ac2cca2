use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cfkit::{int_matrix, ChannelInstance, IntMatrix, Pair};
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// Channel input shared by `region`, `search` and `mac`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelInput {
    #[serde(rename = "H")]
    pub h: HInput,
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    #[serde(rename = "A", default)]
    pub a: Option<Vec<Vec<i64>>>,
    #[serde(default)]
    pub mapping: Option<Vec<Pair>>,
}

/// One channel matrix, or one per receiver.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum HInput {
    Single(Vec<Vec<f64>>),
    Compound(Vec<Vec<Vec<f64>>>),
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid input {}", path.display()))
}

impl ChannelInput {
    pub fn channel(&self) -> Result<ChannelInstance> {
        match &self.h {
            HInput::Single(h) => Ok(ChannelInstance::from_rows(h, &self.p)?),
            HInput::Compound(_) => bail!("H holds several receivers; use --mode compound"),
        }
    }

    pub fn receivers(&self) -> Result<Vec<ChannelInstance>> {
        match &self.h {
            HInput::Single(h) => Ok(vec![ChannelInstance::from_rows(h, &self.p)?]),
            HInput::Compound(hs) => {
                if hs.is_empty() {
                    bail!("H lists no receivers");
                }
                hs.iter().map(|h| Ok(ChannelInstance::from_rows(h, &self.p)?)).collect()
            }
        }
    }

    /// `A` when present, validated against the number of users.
    pub fn coefficients(&self, users: usize) -> Result<Option<IntMatrix>> {
        let Some(a) = &self.a else { return Ok(None) };
        parse_coefficients(a, users).map(Some)
    }

    pub fn mapping_set(&self) -> Option<BTreeSet<Pair>> {
        self.mapping.as_ref().map(|m| m.iter().copied().collect())
    }
}

pub fn parse_coefficients(a: &[Vec<i64>], users: usize) -> Result<IntMatrix> {
    if a.is_empty() {
        bail!("A is empty");
    }
    if let Some(r) = a.iter().position(|row| row.len() != users) {
        bail!("row {r} of A has {} entries, expected {users}", a[r].len());
    }
    Ok(int_matrix(a))
}
