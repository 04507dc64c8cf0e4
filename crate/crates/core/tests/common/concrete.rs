//! Symbolic checkpoints against the concrete interpreter on loop-free
//! random programs.

use std::collections::{BTreeMap, BTreeSet};

use super::interp::{self, Env};
use super::random_ir::{random_program, rng, GenConfig, CONTRACT};
use dappcheck::graphs::PlanEntry;
use dappcheck::ir::{parse_ir, IrProgram, Op, StmtId};
use dappcheck::symexec::{eval_concrete, execute_function, Leaf, Limits};
use dappcheck::{Address, Selector, Word};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

fn word(r: &mut ChaCha8Rng) -> Word {
    match r.random_range(0..4) {
        0 => Word::from(r.random_range(0..4u64)),
        1 => Word::from(r.random_range(0..2000u64)),
        2 => Word::from(r.random::<u64>()),
        _ => Word::from_big_endian(&r.random::<[u8; 32]>()),
    }
}

fn every_call_and_store(p: &IrProgram) -> BTreeSet<StmtId> {
    p.statements().filter(|(_, s)| matches!(s.op, Op::Call | Op::Sstore)).map(|(_, s)| s.id.clone()).collect()
}

pub fn bindings(env: &Env, selector: Selector) -> BTreeMap<Leaf, Word> {
    let mut b = BTreeMap::from([
        (Leaf::Caller, env.caller),
        (Leaf::CallValue, env.callvalue),
        (Leaf::Timestamp, env.timestamp),
        (Leaf::BalanceSelf, env.balance),
        (Leaf::SelfAddress, env.self_address),
    ]);
    for (slot, w) in &env.storage {
        b.insert(Leaf::StoreInit(*slot), *w);
    }
    for (i, w) in env.calldata.iter().enumerate() {
        b.insert(Leaf::Calldata(selector, i), *w);
    }
    b
}

/// Runs one (program, input) case; `Err` describes a mismatch.
pub fn check_case(p: &IrProgram, selector: Selector, env: &Env) -> Result<usize, String> {
    let plan = PlanEntry { checkpoints: every_call_and_store(p), tracked: BTreeSet::new() };
    let res = execute_function(p, selector, &plan, Limits::default(), None).map_err(|e| e.to_string())?;
    if res.budget_exceeded || res.cut_paths > 0 {
        return Err("exploration incomplete".into());
    }
    let concrete = interp::run(p, selector, env, 10_000).ok_or("interpreter did not finish")?;
    let b = bindings(env, selector);
    let mut symbolic = Vec::new();
    for cp in &res.checkpoints {
        let mut on_path = true;
        for c in &cp.path {
            let v = eval_concrete(c, &b).map_err(|e| format!("{}: {e}", cp.site))?;
            on_path &= !v.is_zero();
        }
        if !on_path {
            continue;
        }
        if !cp.feasibility.possible() {
            return Err(format!("{}: concretely reached but judged infeasible", cp.site));
        }
        let mut vals = BTreeMap::new();
        for (k, e) in &cp.captured {
            vals.insert(k.clone(), eval_concrete(e, &b).map_err(|e| e.to_string())?);
        }
        symbolic.push((cp.site.clone(), vals));
    }
    let mut concrete = concrete;
    concrete.sort();
    symbolic.sort();
    if concrete != symbolic {
        return Err(format!("concrete {concrete:?}\nsymbolic {symbolic:?}"));
    }
    Ok(concrete.len())
}

fn random_env(r: &mut ChaCha8Rng, nparams: usize) -> Env {
    let self_address = CONTRACT.parse::<Address>().unwrap().to_word();
    Env {
        caller: word(r),
        callvalue: word(r),
        timestamp: word(r),
        balance: word(r),
        self_address,
        storage: (0..5u64).map(|k| (Word::from(k), word(r))).collect(),
        calldata: (0..nparams).map(|_| word(r)).collect(),
    }
}

/// Runs `cases` seeded cases and returns how many captures were compared.
pub fn run_cases(seed: u64, cases: usize) -> Result<usize, String> {
    let mut r = rng(seed);
    let cfg = GenConfig { symbolic_slots: false, call_results: false, ..GenConfig::default() };
    let mut compared = 0;
    for i in 0..cases {
        let g = random_program(&mut r, cfg);
        let p = parse_ir(&g.text).map_err(|e| e.to_string())?;
        let (sel, nparams) = g.public[r.random_range(0..g.public.len())].clone();
        let env = random_env(&mut r, nparams);
        let selector: Selector = sel.parse().unwrap();
        compared += check_case(&p, selector, &env).map_err(|e| format!("case {i}: {e}\n{}\n{env:?}", g.text))?;
    }
    Ok(compared)
}
