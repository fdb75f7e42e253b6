use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EndowmentProfile, RoundRecord, BLOCK_ROUNDS, PLAYERS};
use crate::error::{Error, Result};
use crate::mechanism::MechanismSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockLabel {
    #[serde(rename = "tutorial")]
    Tutorial,
    A,
    B,
}

impl BlockLabel {
    pub fn swapped(self) -> Self {
        match self {
            BlockLabel::A => BlockLabel::B,
            BlockLabel::B => BlockLabel::A,
            BlockLabel::Tutorial => BlockLabel::Tutorial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Vote {
    A,
    B,
}

impl Vote {
    pub fn label(self) -> BlockLabel {
        match self {
            Vote::A => BlockLabel::A,
            Vote::B => BlockLabel::B,
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            Vote::A => Vote::B,
            Vote::B => Vote::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismPair {
    #[serde(rename = "A")]
    pub a: MechanismSpec,
    #[serde(rename = "B")]
    pub b: MechanismSpec,
}

impl MechanismPair {
    pub fn get(&self, label: BlockLabel) -> MechanismSpec {
        match label {
            BlockLabel::A => self.a.clone(),
            BlockLabel::B => self.b.clone(),
            BlockLabel::Tutorial => MechanismSpec::equal_split(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub mech: BlockLabel,
    pub rounds: Vec<RoundRecord>,
}

/// One full session, serialised as a single JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub profile: EndowmentProfile,
    pub mechanisms: MechanismPair,
    pub blocks: Vec<BlockRecord>,
    pub votes: [Vote; PLAYERS],
    pub bonus_mech: BlockLabel,
}

impl EpisodeRecord {
    pub fn block(&self, label: BlockLabel) -> Option<&BlockRecord> {
        self.blocks.iter().take(3).find(|b| b.mech == label)
    }

    pub fn vote_fraction_a(&self) -> f64 {
        self.votes.iter().filter(|&&v| v == Vote::A).count() as f64 / PLAYERS as f64
    }

    pub fn num_rounds(&self) -> usize {
        self.blocks.iter().map(|b| b.rounds.len()).sum()
    }

    /// The same session described with the `A`/`B` labels exchanged.
    pub fn relabeled(&self) -> Self {
        let mut out = self.clone();
        out.mechanisms = MechanismPair {
            a: self.mechanisms.b.clone(),
            b: self.mechanisms.a.clone(),
        };
        for b in &mut out.blocks {
            b.mech = b.mech.swapped();
        }
        out.votes = self.votes.map(Vote::swapped);
        out.bonus_mech = self.bonus_mech.swapped();
        out
    }

    /// Checks the structural invariants of a complete session.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::Format(reason));
        if self.blocks.len() != BLOCK_ROUNDS.len() {
            return bad(format!("expected 4 blocks, found {}", self.blocks.len()));
        }
        let labels: Vec<BlockLabel> = self.blocks.iter().map(|b| b.mech).collect();
        if labels[0] != BlockLabel::Tutorial {
            return bad("block 1 must be the tutorial block".into());
        }
        let mut middle = [labels[1], labels[2]];
        middle.sort_by_key(|l| *l as u8);
        if middle != [BlockLabel::A, BlockLabel::B] {
            return bad(format!("blocks 2 and 3 must be A and B, found {labels:?}"));
        }
        if labels[3] != self.bonus_mech || self.bonus_mech == BlockLabel::Tutorial {
            return bad("block 4 must replay the bonus mechanism".into());
        }
        let e = self.profile.coins();
        for (block, want) in self.blocks.iter().zip(BLOCK_ROUNDS) {
            if block.rounds.len() != want {
                return bad(format!("block has {} rounds, expected {want}", block.rounds.len()));
            }
            for (t, r) in block.rounds.iter().enumerate() {
                if r.t as usize != t + 1 {
                    return bad(format!("round index {} at position {}", r.t, t + 1));
                }
                for i in 0..PLAYERS {
                    if !(0.0..=e[i]).contains(&r.c[i]) {
                        return bad(format!("illegal contribution {} for seat {i}", r.c[i]));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn write_jsonl<W: Write>(mut out: W, episodes: &[EpisodeRecord]) -> Result<()> {
    for ep in episodes {
        serde_json::to_writer(&mut out, ep)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL corpus, reporting the first malformed line.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<EpisodeRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: EpisodeRecord = serde_json::from_str(&line).map_err(|e| Error::Corpus {
            line: n + 1,
            reason: e.to_string(),
        })?;
        ep.validate().map_err(|e| Error::Corpus {
            line: n + 1,
            reason: e.to_string(),
        })?;
        out.push(ep);
    }
    Ok(out)
}
