//! Semantic-preserving source transformations and genomes of them.

mod genome;
mod rewrite;
mod sites;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::minic::{resolve_scopes, NodeId, SourceUnit, SymbolTable};

pub use genome::{
    apply_genome, apply_genome_traced, random_edit, random_genome, random_genome_with, Edit,
    TransformGenome, DEFAULT_MAX_GENOME_LEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum OperatorId {
    VarRename = 1,
    ForToWhile = 2,
    WhileToFor = 3,
    CompoundAssignExpand = 4,
    IncDecExpand = 5,
    IfBranchSwap = 6,
    RelationalMirror = 7,
    CommutativeSwap = 8,
    DeclSplit = 9,
    DeadStoreInsert = 10,
    ParenWrap = 11,
    TernaryToIf = 12,
    SwitchToIfChain = 13,
    BoolCondNormalize = 14,
    IndependentStmtSwap = 15,
}

impl OperatorId {
    pub const ALL: [OperatorId; 15] = [
        OperatorId::VarRename,
        OperatorId::ForToWhile,
        OperatorId::WhileToFor,
        OperatorId::CompoundAssignExpand,
        OperatorId::IncDecExpand,
        OperatorId::IfBranchSwap,
        OperatorId::RelationalMirror,
        OperatorId::CommutativeSwap,
        OperatorId::DeclSplit,
        OperatorId::DeadStoreInsert,
        OperatorId::ParenWrap,
        OperatorId::TernaryToIf,
        OperatorId::SwitchToIfChain,
        OperatorId::BoolCondNormalize,
        OperatorId::IndependentStmtSwap,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<OperatorId> {
        OperatorId::ALL.get(usize::from(n).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorId::VarRename => "VarRename",
            OperatorId::ForToWhile => "ForToWhile",
            OperatorId::WhileToFor => "WhileToFor",
            OperatorId::CompoundAssignExpand => "CompoundAssignExpand",
            OperatorId::IncDecExpand => "IncDecExpand",
            OperatorId::IfBranchSwap => "IfBranchSwap",
            OperatorId::RelationalMirror => "RelationalMirror",
            OperatorId::CommutativeSwap => "CommutativeSwap",
            OperatorId::DeclSplit => "DeclSplit",
            OperatorId::DeadStoreInsert => "DeadStoreInsert",
            OperatorId::ParenWrap => "ParenWrap",
            OperatorId::TernaryToIf => "TernaryToIf",
            OperatorId::SwitchToIfChain => "SwitchToIfChain",
            OperatorId::BoolCondNormalize => "BoolCondNormalize",
            OperatorId::IndependentStmtSwap => "IndependentStmtSwap",
        }
    }
}

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<OperatorId> for u8 {
    fn from(op: OperatorId) -> u8 {
        op.number()
    }
}

impl TryFrom<u8> for OperatorId {
    type Error = String;
    fn try_from(n: u8) -> Result<Self, String> {
        OperatorId::from_number(n).ok_or_else(|| format!("operator number {n} is not in 1..=15"))
    }
}

/// Accepts either the operator number or its name (case-insensitive).
impl FromStr for OperatorId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if let Ok(n) = s.trim().parse::<u8>() {
            return OperatorId::try_from(n);
        }
        OperatorId::ALL
            .into_iter()
            .find(|op| op.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown operator '{s}'"))
    }
}

/// An anchor node where an operator may fire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Site {
    pub node_id: NodeId,
    /// Short human-readable rendering of the anchor.
    pub description: String,
}

impl Site {
    pub fn at(node_id: NodeId) -> Site {
        Site {
            node_id,
            description: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformOutcome {
    Applied { unit: SourceUnit, site: Site },
    Inapplicable(String),
}

impl TransformOutcome {
    pub fn applied(self) -> Option<SourceUnit> {
        match self {
            TransformOutcome::Applied { unit, .. } => Some(unit),
            TransformOutcome::Inapplicable(_) => None,
        }
    }

    pub fn is_applied(&self) -> bool {
        matches!(self, TransformOutcome::Applied { .. })
    }
}

/// Sites of every operator. A unit that does not resolve has none.
#[derive(Debug, Clone, Default)]
pub struct SiteIndex {
    sites: BTreeMap<OperatorId, Vec<Site>>,
    table: SymbolTable,
}

impl SiteIndex {
    pub fn build(unit: &SourceUnit) -> SiteIndex {
        match resolve_scopes(unit) {
            Ok(table) => SiteIndex {
                sites: sites::collect_sites(unit, &table),
                table,
            },
            Err(_) => SiteIndex::default(),
        }
    }

    pub fn sites(&self, op: OperatorId) -> &[Site] {
        self.sites.get(&op).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Operators with at least one site, in catalogue order.
    pub fn applicable_ops(&self) -> Vec<OperatorId> {
        OperatorId::ALL
            .into_iter()
            .filter(|&op| !self.sites(op).is_empty())
            .collect()
    }
}

pub fn applicable_sites(unit: &SourceUnit, op: OperatorId) -> Vec<Site> {
    SiteIndex::build(unit).sites(op).to_vec()
}

pub fn apply_op(unit: &SourceUnit, op: OperatorId, site: &Site, seed: u64) -> TransformOutcome {
    let index = SiteIndex::build(unit);
    apply_indexed(unit, &index, op, site.node_id, seed)
}

fn apply_indexed(
    unit: &SourceUnit,
    index: &SiteIndex,
    op: OperatorId,
    node_id: NodeId,
    seed: u64,
) -> TransformOutcome {
    let Some(site) = index.sites(op).iter().find(|s| s.node_id == node_id) else {
        return TransformOutcome::Inapplicable(format!("{op} does not apply at node {node_id}"));
    };
    let mut out = unit.clone();
    if let Err(reason) = rewrite::rewrite(&mut out, &index.table, op, node_id, seed) {
        return TransformOutcome::Inapplicable(reason);
    }
    out.renumber();
    TransformOutcome::Applied {
        unit: out,
        site: site.clone(),
    }
}

#[cfg(test)]
mod tests;
