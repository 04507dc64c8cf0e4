//! Induction rules producing Transfer, SenderGuard and StorageRole facts.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::facts::{FactDb, LoadFact};
use crate::ir::{IrProgram, Op, Operand, StmtId};
use crate::sigdb::SignatureDb;
use crate::word::{Selector, Word};

pub const TRANSFER_SIG: u32 = 0xa9059cbb;
pub const TRANSFER_FROM_SIG: u32 = 0x23b872dd;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferKind {
    Erc20Transfer,
    Erc20TransferFrom,
    Ether,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TransferFact {
    pub call_site: StmtId,
    pub selector: Selector,
    pub recipient: Operand,
    pub amount: Operand,
    pub kind: TransferKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SenderGuardFact {
    pub slot: Word,
    pub selector: Selector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Owner,
    Supply,
    Pause,
    TokenUri,
    LockTime,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Owner => "owner",
            Role::Supply => "supply",
            Role::Pause => "pause",
            Role::TokenUri => "token_uri",
            Role::LockTime => "lock_time",
        })
    }
}

/// Which rule established a storage role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleRule {
    /// `owner()` returns the slot.
    OwnerGetter,
    /// The slot is compared with the caller and the result gates code.
    SenderGuard,
    /// A standard getter (`totalSupply()`, `paused()`, `tokenURI(uint256)`)
    /// returns the slot.
    StandardGetter,
    /// The slot is set to the block timestamp plus a caller-chosen argument.
    LockArithmetic,
    /// The slot is loaded, added to and written back.
    AddAccumulator,
    /// The slot's own value gates a store of a nonzero constant to it.
    FlagSet,
}

impl fmt::Display for RoleRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoleRule::OwnerGetter => "owner_getter",
            RoleRule::SenderGuard => "sender_guard",
            RoleRule::StandardGetter => "standard_getter",
            RoleRule::LockArithmetic => "lock_arithmetic",
            RoleRule::AddAccumulator => "add_accumulator",
            RoleRule::FlagSet => "flag_set",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StorageRoleFact {
    pub role: Role,
    pub slot: Word,
    pub selector: Selector,
    pub rule: RoleRule,
}

/// Everything the rules derive for one program.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Inference {
    pub transfers: Vec<TransferFact>,
    pub guards: Vec<SenderGuardFact>,
    pub roles: Vec<StorageRoleFact>,
}

impl Inference {
    pub fn role_slots(&self, role: Role) -> BTreeSet<Word> {
        self.roles.iter().filter(|r| r.role == role).map(|r| r.slot).collect()
    }

    pub fn has_role(&self, role: Role, slot: Word) -> bool {
        self.roles.iter().any(|r| r.role == role && r.slot == slot)
    }

    /// Selectors guarded by a sender check against an owner slot.
    pub fn owner_guarded(&self, selector: Selector) -> Option<Word> {
        self.guards
            .iter()
            .find(|g| g.selector == selector && self.has_role(Role::Owner, g.slot))
            .map(|g| g.slot)
    }
}

pub fn infer_all(db: &FactDb, program: &IrProgram, sigs: &SignatureDb) -> Inference {
    Inference {
        transfers: infer_transfers(db),
        guards: infer_sender_guards(db),
        roles: infer_storage_roles(db, program, sigs),
    }
}

pub fn infer_transfers(db: &FactDb) -> Vec<TransferFact> {
    let mut out = BTreeSet::new();
    for (site, _, sig) in &db.external_call {
        let (kind, r, a) = match db.const_of(sig) {
            Some(w) if w == Word::from(TRANSFER_SIG) => (TransferKind::Erc20Transfer, 0, 1),
            Some(w) if w == Word::from(TRANSFER_FROM_SIG) => (TransferKind::Erc20TransferFrom, 1, 2),
            _ => continue,
        };
        let arg = |i: usize| {
            db.call_arg.iter().find(|(s, _, j)| s == site && *j == i).map(|(_, v, _)| v.clone())
        };
        let (Some(recipient), Some(amount)) = (arg(r), arg(a)) else { continue };
        for selector in db.selectors(site) {
            out.insert(TransferFact {
                call_site: site.clone(),
                selector,
                recipient: recipient.clone(),
                amount: amount.clone(),
                kind,
            });
        }
    }
    for (site, target, value) in &db.plain_call {
        if db.call_arg.iter().any(|(s, _, _)| s == site) {
            continue;
        }
        for selector in db.selectors(site) {
            out.insert(TransferFact {
                call_site: site.clone(),
                selector,
                recipient: target.clone(),
                amount: value.clone(),
                kind: TransferKind::Ether,
            });
        }
    }
    out.into_iter().collect()
}

fn const_loads(db: &FactDb) -> impl Iterator<Item = (&LoadFact, Word)> {
    db.loads.iter().filter_map(|l| db.const_of(&l.slot).map(|w| (l, w)))
}

pub fn infer_sender_guards(db: &FactDb) -> Vec<SenderGuardFact> {
    let mut out = BTreeSet::new();
    for (load, slot) in const_loads(db) {
        if db.compared_with_caller(&load.def) {
            for selector in db.selectors(&load.site) {
                out.insert(SenderGuardFact { slot, selector });
            }
        }
    }
    out.into_iter().collect()
}

fn getter_role(signature: &str) -> Option<(Role, RoleRule)> {
    Some(match signature {
        "owner()" => (Role::Owner, RoleRule::OwnerGetter),
        "totalSupply()" => (Role::Supply, RoleRule::StandardGetter),
        "paused()" => (Role::Pause, RoleRule::StandardGetter),
        "tokenURI(uint256)" => (Role::TokenUri, RoleRule::StandardGetter),
        _ => return None,
    })
}

const TOKEN_SIGNATURES: [&str; 3] = ["transfer(address,uint256)", "balanceOf(address)", "mint(address,uint256)"];

/// Exposes a token interface entry point.
pub fn is_token(program: &IrProgram, sigs: &SignatureDb) -> bool {
    program
        .public_functions()
        .filter_map(|f| f.selector)
        .filter_map(|s| sigs.signature(s))
        .any(|sig| TOKEN_SIGNATURES.contains(&sig))
}

pub fn infer_storage_roles(db: &FactDb, program: &IrProgram, sigs: &SignatureDb) -> Vec<StorageRoleFact> {
    let mut out = BTreeSet::new();

    // Getters: the loaded value is returned unchanged (arithmetic on the
    // way out means the slot is not the role variable itself).
    for (selector, ret) in &db.returns {
        let Some((role, rule)) = sigs.signature(*selector).and_then(getter_role) else { continue };
        for (load, slot) in const_loads(db) {
            if db.copies(&load.def, ret) {
                out.insert(StorageRoleFact { role, slot, selector: *selector, rule });
            }
        }
    }

    for (load, slot) in const_loads(db) {
        if db.compared_with_caller(&load.def) && !db.controlled_by(&load.def).is_empty() {
            for selector in db.selectors(&load.site) {
                out.insert(StorageRoleFact { role: Role::Owner, slot, selector, rule: RoleRule::SenderGuard });
            }
        }
    }

    let const_stores = || db.stores.iter().filter_map(|s| db.const_of(&s.slot).map(|w| (s, w)));

    for (store, slot) in const_stores() {
        let Some(z) = store.value.var() else { continue };
        let from_time = db.flows_from_source(crate::facts::Source::Timestamp, z);
        let from_arg = db.func_arg.iter().any(|(_, p)| db.df(p, z));
        if from_time && from_arg {
            for selector in db.selectors(&store.site) {
                out.insert(StorageRoleFact { role: Role::LockTime, slot, selector, rule: RoleRule::LockArithmetic });
            }
        }
    }

    let has_getter = |role: Role, out: &BTreeSet<StorageRoleFact>| {
        out.iter().any(|r| r.role == role && r.rule == RoleRule::StandardGetter)
    };

    // Accumulators only count as a supply in contracts that hold token balances.
    if !has_getter(Role::Supply, &out) && is_token(program, sigs) {
        let mut found = Vec::new();
        for (load, slot) in const_loads(db) {
            let x = Operand::Var(load.def.clone());
            for add in db.math_op.iter().filter(|m| m.op == Op::Add && (m.lhs == x || m.rhs == x)) {
                for (store, sslot) in const_stores() {
                    if sslot == slot && store.value.var().is_some_and(|v| db.df(&add.def, v)) {
                        for selector in db.selectors(&store.site) {
                            found.push(StorageRoleFact {
                                role: Role::Supply,
                                slot,
                                selector,
                                rule: RoleRule::AddAccumulator,
                            });
                        }
                    }
                }
            }
        }
        out.extend(found);
    }

    if !has_getter(Role::Pause, &out) {
        let mut found = Vec::new();
        for (load, slot) in const_loads(db) {
            for (store, sslot) in const_stores() {
                let sets_flag = db.const_of(&store.value).is_some_and(|v| !v.is_zero());
                if sslot == slot && sets_flag && db.value_controls(&load.def, &store.site) {
                    for selector in db.selectors(&store.site) {
                        found.push(StorageRoleFact { role: Role::Pause, slot, selector, rule: RoleRule::FlagSet });
                    }
                }
            }
        }
        out.extend(found);
    }

    out.into_iter().collect()
}
