use std::fmt;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use super::block::{validate_block, validate_genesis, Block, Violation};
use super::crypto::KeyRegistry;

/// Ordered blocks starting from genesis.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct Ledger {
    blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainViolation {
    pub index: u64,
    pub violations: Vec<Violation>,
}

impl fmt::Display for ChainViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations == [Violation::MissingGenesis] {
            return write!(f, "missing genesis");
        }
        write!(f, "violation at index {}:", self.index)?;
        for (i, v) in self.violations.iter().enumerate() {
            write!(f, "{} {v}", if i == 0 { "" } else { ";" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct LedgerParseError {
    pub line: usize,
    pub message: String,
}

impl Ledger {
    pub fn new(genesis: Block) -> Self {
        Self { blocks: vec![genesis] }
    }

    /// Wraps blocks without checking them; pair with [`verify_chain`].
    pub fn from_blocks(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last()
    }

    /// Validates `block` against the tip and appends it.
    pub fn append(&mut self, block: Block, registry: &KeyRegistry) -> Result<(), Vec<Violation>> {
        let Some(tip) = self.blocks.last() else {
            return Err(vec![Violation::MissingGenesis]);
        };
        let signer = block.payload.signer_id;
        let key = registry
            .get(signer)
            .ok_or_else(|| vec![Violation::UnknownSigner { signer }])?;
        validate_block(&block, tip, key)?;
        self.blocks.push(block);
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            out.push_str(&serde_json::to_string(b).expect("block serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses one block per line. Lines must be in canonical form (exactly
    /// what [`Ledger::to_jsonl`] writes), so any textual change that decodes
    /// to the same values is still rejected.
    pub fn from_jsonl(text: &str) -> Result<Self, LedgerParseError> {
        let mut blocks = Vec::new();
        if text.is_empty() {
            return Ok(Self { blocks });
        }
        let Some(body) = text.strip_suffix('\n') else {
            return Err(LedgerParseError {
                line: text.lines().count(),
                message: "missing trailing newline".into(),
            });
        };
        for (i, line) in body.split('\n').enumerate() {
            let err = |message: String| LedgerParseError { line: i + 1, message };
            let block: Block = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let canonical = serde_json::to_string(&block).expect("block serializes");
            if canonical != line {
                return Err(err("block is not in canonical form".into()));
            }
            blocks.push(block);
        }
        Ok(Self { blocks })
    }

    pub fn save_jsonl(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_jsonl())
    }
}

fn lookup<'a>(registry: &'a KeyRegistry, block: &Block) -> Result<&'a ed25519_dalek::VerifyingKey, ChainViolation> {
    let signer = block.payload.signer_id;
    registry.get(signer).ok_or(ChainViolation {
        index: block.index,
        violations: vec![Violation::UnknownSigner { signer }],
    })
}

/// Validates every block from genesis and reports the earliest failure.
/// The reported index is the block's position in the ledger.
pub fn verify_chain(ledger: &Ledger, registry: &KeyRegistry) -> Result<(), ChainViolation> {
    let Some(genesis) = ledger.blocks.first() else {
        return Err(ChainViolation {
            index: 0,
            violations: vec![Violation::MissingGenesis],
        });
    };
    let at = |pos: usize, violations| ChainViolation {
        index: pos as u64,
        violations,
    };
    let key = lookup(registry, genesis).map_err(|e| at(0, e.violations))?;
    validate_genesis(genesis, key).map_err(|v| at(0, v))?;
    for (pos, pair) in ledger.blocks.windows(2).enumerate() {
        let key = lookup(registry, &pair[1]).map_err(|e| at(pos + 1, e.violations))?;
        validate_block(&pair[1], &pair[0], key).map_err(|v| at(pos + 1, v))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditFailure {
    Parse(LedgerParseError),
    Chain(ChainViolation),
}

impl AuditFailure {
    /// Block position at which the problem was detected.
    pub fn index(&self) -> u64 {
        match self {
            Self::Parse(e) => e.line.saturating_sub(1) as u64,
            Self::Chain(c) => c.index,
        }
    }
}

impl fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Parse(e) => write!(f, "violation at index {}: parse error on {e}", self.index()),
            Self::Chain(c) => write!(f, "{c}"),
        }
    }
}

/// Parses and verifies a persisted ledger given as raw bytes. Returns the
/// number of blocks.
pub fn audit_jsonl(bytes: &[u8], registry: &KeyRegistry) -> Result<usize, AuditFailure> {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => {
            let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
            return Err(AuditFailure::Parse(LedgerParseError {
                line,
                message: "invalid UTF-8".into(),
            }));
        }
    };
    let ledger = Ledger::from_jsonl(text).map_err(AuditFailure::Parse)?;
    verify_chain(&ledger, registry).map_err(AuditFailure::Chain)?;
    Ok(ledger.len())
}
