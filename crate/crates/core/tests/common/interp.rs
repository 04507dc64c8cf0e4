//! Direct concrete interpreter for loop-free IR, recording the operands of
//! every CALL and SSTORE it executes.

use std::collections::BTreeMap;

use dappcheck::ir::{IrProgram, Op, Operand, StmtId, Terminator, Var};
use dappcheck::Word;

#[derive(Clone, Debug)]
pub struct Env {
    pub caller: Word,
    pub callvalue: Word,
    pub timestamp: Word,
    pub balance: Word,
    pub self_address: Word,
    pub storage: BTreeMap<Word, Word>,
    pub calldata: Vec<Word>,
}

/// (site, captured operand values) in execution order.
pub type Trace = Vec<(StmtId, BTreeMap<String, Word>)>;

const TRANSFER: u32 = 0xa9059cbb;
const TRANSFER_FROM: u32 = 0x23b872dd;

fn bool_word(b: bool) -> Word {
    if b {
        Word::one()
    } else {
        Word::zero()
    }
}

fn binary(op: &Op, a: Word, b: Word) -> Word {
    match op {
        Op::Add => a.overflowing_add(b).0,
        Op::Sub => a.overflowing_sub(b).0,
        Op::Mul => a.overflowing_mul(b).0,
        Op::Div => a.checked_div(b).unwrap_or_default(),
        Op::Mod => a.checked_rem(b).unwrap_or_default(),
        Op::Lt => bool_word(a < b),
        Op::Gt => bool_word(a > b),
        Op::Eq => bool_word(a == b),
        Op::And => a & b,
        Op::Or => a | b,
        other => panic!("not a binary op: {other:?}"),
    }
}

struct Frame {
    func: usize,
    block: usize,
    idx: usize,
    env: BTreeMap<Var, (Word, u64)>,
    ret: Option<Var>,
}

fn read(env: &BTreeMap<Var, (Word, u64)>, o: &Operand) -> Word {
    match o {
        Operand::Var(v) => env.get(v).map(|(w, _)| *w).unwrap_or_default(),
        Operand::Lit(w) | Operand::Slot(w) => *w,
    }
}

fn call_capture(args: &[Word]) -> BTreeMap<String, Word> {
    let keys = if args.len() == 2 {
        Some((0, 1))
    } else if args.len() >= 5 && args[2] == Word::from(TRANSFER) {
        Some((3, 4))
    } else if args.len() >= 6 && args[2] == Word::from(TRANSFER_FROM) {
        Some((4, 5))
    } else {
        None
    };
    match keys {
        Some((r, a)) => BTreeMap::from([("recipient".to_string(), args[r]), ("amount".to_string(), args[a])]),
        None => BTreeMap::from([("target".to_string(), args[0]), ("value".to_string(), args[1])]),
    }
}

/// Runs the public function with `selector`; `None` if there is no such
/// function or it runs past `max_steps`.
pub fn run(program: &IrProgram, selector: dappcheck::Selector, input: &Env, max_steps: usize) -> Option<Trace> {
    let func = program.functions.iter().position(|f| f.selector == Some(selector))?;
    let mut storage = input.storage.clone();
    let mut trace = Trace::new();
    let mut seq = 0u64;
    let mut env = BTreeMap::new();
    for (i, p) in program.functions[func].params.iter().enumerate() {
        env.insert(p.clone(), (input.calldata.get(i).copied().unwrap_or_default(), 0));
    }
    let mut frames = vec![Frame { func, block: 0, idx: 0, env, ret: None }];
    for _ in 0..max_steps {
        let fr = frames.last_mut().expect("live frame");
        let f = &program.functions[fr.func];
        let block = &f.blocks[fr.block];
        if fr.idx < block.statements.len() {
            let s = &block.statements[fr.idx];
            fr.idx += 1;
            let args: Vec<Word> = s.args.iter().map(|o| read(&fr.env, o)).collect();
            let value = match &s.op {
                Op::Const => Some(args[0]),
                Op::Sload => Some(storage.get(&args[0]).copied().unwrap_or_default()),
                Op::Sstore => {
                    let captured = BTreeMap::from([("slot".to_string(), args[0]), ("value".to_string(), args[1])]);
                    trace.push((s.id.clone(), captured));
                    storage.insert(args[0], args[1]);
                    None
                }
                Op::Caller => Some(input.caller),
                Op::CallValue => Some(input.callvalue),
                Op::Timestamp => Some(input.timestamp),
                Op::Address => Some(input.self_address),
                Op::Balance => {
                    assert_eq!(args[0], input.self_address, "balance of a foreign account");
                    Some(input.balance)
                }
                Op::IsZero => Some(bool_word(args[0].is_zero())),
                // the operand defined last is the one from the path taken
                Op::Phi => s
                    .args
                    .iter()
                    .filter_map(|o| o.var().and_then(|v| fr.env.get(v)))
                    .max_by_key(|(_, order)| *order)
                    .map(|(w, _)| *w),
                Op::Call => {
                    trace.push((s.id.clone(), call_capture(&args)));
                    assert!(s.def.is_none(), "call results have no concrete value");
                    None
                }
                Op::CallPrivate(callee) => {
                    let ci = program.function_index(callee).expect("callee exists");
                    let mut env = BTreeMap::new();
                    for (i, p) in program.functions[ci].params.iter().enumerate() {
                        seq += 1;
                        env.insert(p.clone(), (args.get(i).copied().unwrap_or_default(), seq));
                    }
                    frames.push(Frame { func: ci, block: 0, idx: 0, env, ret: s.def.clone() });
                    continue;
                }
                _ => Some(binary(&s.op, args[0], args[1])),
            };
            if let (Some(d), Some(v)) = (&s.def, value) {
                seq += 1;
                fr.env.insert(d.clone(), (v, seq));
            }
            continue;
        }
        match &block.terminator {
            Terminator::Jump(t) => {
                fr.block = f.block_index(t).expect("target exists");
                fr.idx = 0;
            }
            Terminator::JumpI { cond, then_target, else_target } => {
                let c = fr.env.get(cond).map(|(w, _)| *w).unwrap_or_default();
                let t = if c.is_zero() { else_target } else { then_target };
                fr.block = f.block_index(t).expect("target exists");
                fr.idx = 0;
            }
            Terminator::ReturnPrivate { values, .. } => {
                let v = values.first().map(|o| read(&fr.env, o)).unwrap_or_default();
                let done = frames.pop().expect("live frame");
                let Some(caller) = frames.last_mut() else { return Some(trace) };
                if let Some(d) = done.ret {
                    seq += 1;
                    caller.env.insert(d, (v, seq));
                }
            }
            Terminator::Return(_) | Terminator::Stop | Terminator::Revert => return Some(trace),
        }
    }
    None
}
