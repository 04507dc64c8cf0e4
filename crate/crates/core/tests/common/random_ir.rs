//! Seeded random IR programs: loop-free, a spine of guard blocks with
//! optional if/else diamonds merged by PHI, plus an optional private helper.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CONTRACT: &str = "0x00000000000000000000000000000000000000aa";

/// Dictionary getters and entry points the inference rules key on, then
/// anonymous ones.
const SELECTORS: [&str; 10] = [
    "0x18160ddd", "0x5c975abb", "0xc87b56dd", "0x8da5cb5b", "0xa9059cbb", "0xdd467064", "0x40c10f19", "0x00000101",
    "0x00000102", "0x00000103",
];

const BIN_OPS: [&str; 10] = ["ADD", "SUB", "MUL", "DIV", "MOD", "LT", "GT", "EQ", "AND", "OR"];

#[derive(Clone, Copy, Debug)]
pub struct GenConfig {
    pub max_statements: usize,
    /// Allow SLOAD/SSTORE at variable slots.
    pub symbolic_slots: bool,
    /// Allow `CALL` statements that define a result.
    pub call_results: bool,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig { max_statements: 30, symbolic_slots: true, call_results: true }
    }
}

#[derive(Clone, Debug)]
pub struct GenProgram {
    pub text: String,
    /// (selector, parameter count) of each public function.
    pub public: Vec<(String, usize)>,
    pub statements: usize,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Base seed for the seeded suites, overridable with `DAPPCHECK_TEST_SEED`.
pub fn test_seed() -> u64 {
    std::env::var("DAPPCHECK_TEST_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0x5eed)
}

struct Block {
    id: String,
    lines: Vec<String>,
    term: String,
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    cfg: GenConfig,
    next_var: usize,
    used: usize,
}

impl Gen<'_> {
    fn fresh(&mut self) -> String {
        self.next_var += 1;
        format!("v{}", self.next_var)
    }

    fn left(&self) -> usize {
        // one statement held back for a branch condition
        self.cfg.max_statements.saturating_sub(self.used + 1)
    }

    fn literal(&mut self) -> String {
        match self.rng.random_range(0..8) {
            0 => "0".into(),
            1 => "1".into(),
            2 => "100".into(),
            3 => "1000".into(),
            4 => format!("{}", self.rng.random_range(0..16u64)),
            5 => format!("0x{:x}", self.rng.random::<u64>()),
            6 => "0xffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff".into(),
            _ => format!("{}", self.rng.random_range(2..64u64)),
        }
    }

    fn operand(&mut self, scope: &[String]) -> String {
        if scope.is_empty() || self.rng.random_bool(0.25) {
            self.literal()
        } else {
            self.pick(scope)
        }
    }

    fn pick(&mut self, scope: &[String]) -> String {
        if scope.is_empty() {
            return self.literal();
        }
        // favour recent definitions so values chain
        let n = scope.len();
        let i = if self.rng.random_bool(0.6) { n - 1 - self.rng.random_range(0..n.min(3)) } else { self.rng.random_range(0..n) };
        scope[i].clone()
    }

    fn slot(&mut self, scope: &[String]) -> String {
        if self.cfg.symbolic_slots && !scope.is_empty() && self.rng.random_bool(0.1) {
            self.pick(scope)
        } else {
            format!("slot({})", self.rng.random_range(0..5))
        }
    }

    /// Appends one or two statements to `lines`; definitions join `scope`.
    fn statement(&mut self, label: &mut usize, lines: &mut Vec<String>, scope: &mut Vec<String>, helper: Option<&str>) {
        let emit = |label: &mut usize, lines: &mut Vec<String>, used: &mut usize, text: String| {
            *label += 1;
            *used += 1;
            lines.push(format!("s{label}: {text}"));
        };
        let mut used = self.used;
        match self.rng.random_range(0..20) {
            0 => {
                let d = self.fresh();
                let lit = self.literal();
                emit(label, lines, &mut used, format!("{d} = CONST {lit}"));
                scope.push(d);
            }
            1 | 2 => {
                let d = self.fresh();
                let s = self.slot(scope);
                emit(label, lines, &mut used, format!("{d} = SLOAD {s}"));
                scope.push(d);
            }
            3 | 4 => {
                let s = self.slot(scope);
                let v = self.operand(scope);
                emit(label, lines, &mut used, format!("SSTORE {s} {v}"));
            }
            5 => {
                let d = self.fresh();
                let op = ["CALLER", "CALLVALUE", "TIMESTAMP", "ADDRESS"][self.rng.random_range(0..4)];
                emit(label, lines, &mut used, format!("{d} = {op}"));
                scope.push(d);
            }
            6 if self.left() >= 2 => {
                let a = self.fresh();
                let d = self.fresh();
                emit(label, lines, &mut used, format!("{a} = ADDRESS"));
                emit(label, lines, &mut used, format!("{d} = BALANCE {a}"));
                scope.push(a);
                scope.push(d);
            }
            7 => {
                let d = self.fresh();
                let a = self.pick(scope);
                emit(label, lines, &mut used, format!("{d} = ISZERO {a}"));
                scope.push(d);
            }
            8 => {
                let to = self.operand(scope);
                let amt = self.operand(scope);
                if self.cfg.call_results && self.rng.random_bool(0.3) {
                    let d = self.fresh();
                    emit(label, lines, &mut used, format!("{d} = CALL {to} {amt}"));
                    scope.push(d);
                } else {
                    emit(label, lines, &mut used, format!("CALL {to} {amt}"));
                }
            }
            9 => {
                let tok = self.operand(scope);
                let to = self.operand(scope);
                let amt = self.operand(scope);
                let sig = if self.rng.random_bool(0.8) { "0xa9059cbb" } else { "0x12345678" };
                emit(label, lines, &mut used, format!("CALL {tok} 0 {sig} {to} {amt}"));
            }
            10 if helper.is_some() => {
                let d = self.fresh();
                let a = self.operand(scope);
                let b = self.operand(scope);
                emit(label, lines, &mut used, format!("{d} = CALLPRIVATE {} {a} {b}", helper.expect("checked")));
                scope.push(d);
            }
            _ => {
                let d = self.fresh();
                let op = BIN_OPS[self.rng.random_range(0..BIN_OPS.len())];
                let a = self.pick(scope);
                let b = self.operand(scope);
                emit(label, lines, &mut used, format!("{d} = {op} {a} {b}"));
                scope.push(d);
            }
        }
        self.used = used;
    }

    /// A statement that defines a variable (used for diamond arms).
    fn definition(&mut self, label: &mut usize, lines: &mut Vec<String>, scope: &mut Vec<String>) -> String {
        let d = self.fresh();
        let op = BIN_OPS[self.rng.random_range(0..5)];
        let a = self.pick(scope);
        let b = self.operand(scope);
        *label += 1;
        self.used += 1;
        lines.push(format!("s{label}: {d} = {op} {a} {b}"));
        scope.push(d.clone());
        d
    }

    fn helper(&mut self, name: &str) -> String {
        let pa = self.fresh();
        let pb = self.fresh();
        let mut scope = vec![pa.clone(), pb.clone()];
        let mut lines = Vec::new();
        let mut label = 0;
        for _ in 0..self.rng.random_range(1..4) {
            self.statement(&mut label, &mut lines, &mut scope, None);
        }
        let r = scope.last().expect("params in scope").clone();
        let body: String = lines.iter().map(|l| format!("  {l}\n")).collect();
        format!("function {name} private params ({pa}, {pb}) {{\n block B0:\n{body}  returnprivate {pa} {r}\n}}\n\n")
    }

    fn public(&mut self, name: &str, selector: &str, helper: Option<&str>) -> (String, usize) {
        let nparams = self.rng.random_range(0..3);
        let params: Vec<String> = (0..nparams).map(|_| self.fresh()).collect();
        let mut scope = params.clone();
        let mut label = 0;
        let spine = self.rng.random_range(1..5);
        let mut blocks: Vec<Block> = Vec::new();
        let mut side: Vec<Block> = Vec::new();
        let mut phi: Option<(String, String)> = None;
        for i in 0..spine {
            let mut lines = Vec::new();
            if let Some((a, b)) = phi.take() {
                label += 1;
                self.used += 1;
                let d = self.fresh();
                lines.push(format!("s{label}: {d} = PHI {a} {b}"));
                scope.push(d);
            }
            let n = self.rng.random_range(1..5).min(self.left());
            for _ in 0..n {
                self.statement(&mut label, &mut lines, &mut scope, helper);
            }
            let last = i + 1 == spine;
            let term = if last {
                match self.rng.random_range(0..3) {
                    0 => "stop".to_string(),
                    1 => "revert".to_string(),
                    _ => format!("return {}", self.pick(&scope)),
                }
            } else {
                let next = format!("B{}", i + 1);
                if scope.is_empty() {
                    label += 1;
                    self.used += 1;
                    let d = self.fresh();
                    lines.push(format!("s{label}: {d} = CALLVALUE"));
                    scope.push(d);
                }
                let c = self.pick(&scope);
                match self.rng.random_range(0..4) {
                    0 => format!("jump {next}"),
                    1 if self.left() >= 3 => {
                        let mut merged = Vec::new();
                        for arm in [format!("T{i}"), format!("E{i}")] {
                            let mut arm_scope = scope.clone();
                            let mut arm_lines = Vec::new();
                            let d = self.definition(&mut label, &mut arm_lines, &mut arm_scope);
                            merged.push(d);
                            side.push(Block { id: arm, lines: arm_lines, term: format!("jump {next}") });
                        }
                        phi = Some((merged[0].clone(), merged[1].clone()));
                        format!("jumpi {c} T{i} E{i}")
                    }
                    _ => {
                        let exit = format!("X{i}");
                        let t = if self.rng.random_bool(0.5) { "revert" } else { "stop" };
                        side.push(Block { id: exit.clone(), lines: Vec::new(), term: t.to_string() });
                        if self.rng.random_bool(0.5) {
                            format!("jumpi {c} {next} {exit}")
                        } else {
                            format!("jumpi {c} {exit} {next}")
                        }
                    }
                }
            };
            blocks.push(Block { id: format!("B{i}"), lines, term });
        }
        blocks.extend(side);
        let mut text = format!("function {name} public sig {selector} params ({}) {{\n", params.join(", "));
        for b in &blocks {
            text.push_str(&format!(" block {}:\n", b.id));
            for l in &b.lines {
                text.push_str(&format!("  {l}\n"));
            }
            text.push_str(&format!("  {}\n", b.term));
        }
        text.push_str("}\n\n");
        (text, nparams)
    }
}

pub fn random_program(rng: &mut ChaCha8Rng, cfg: GenConfig) -> GenProgram {
    let mut g = Gen { rng, cfg, next_var: 0, used: 0 };
    let mut text = format!("contract {CONTRACT}\n\n");
    let helper = g.rng.random_bool(0.4).then(|| "helper".to_string());
    if let Some(h) = &helper {
        let body = g.helper(h);
        text.push_str(&body);
    }
    let nfuncs = g.rng.random_range(1..4);
    let mut pool: Vec<&str> = SELECTORS.to_vec();
    let mut public = Vec::new();
    for k in 0..nfuncs {
        if g.left() == 0 {
            break;
        }
        let sel = pool.remove(g.rng.random_range(0..pool.len()));
        let (body, n) = g.public(&format!("f{k}"), sel, helper.as_deref());
        text.push_str(&body);
        public.push((sel.to_string(), n));
    }
    GenProgram { text, public, statements: g.used }
}
