use std::collections::BTreeSet;

use super::{IrBlock, IrFunction, IrProgram, Op, Operand, Statement, StmtId, Terminator, Var, Visibility};
use crate::word::{parse_word, Address, Selector};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("variable `{0}` is defined more than once")]
    SsaViolation(String),
    #[error("line {line}: unknown opcode `{name}`")]
    UnknownOpcode { line: usize, name: String },
    #[error("dangling target `{0}`")]
    DanglingTarget(String),
}

fn syntax(line: usize, reason: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, reason: reason.into() }
}

/// Parses the line-based IR text:
///
/// ```text
/// contract 0x<40 hex>
/// function <name> (public sig 0x<8 hex> | private) params (v0, v1, ...) {
///   block <id>:
///     <label>: [<var> =] <OPCODE> <operand>*
///     <terminator>
/// }
/// ```
///
/// `#` and `//` start comments. Operands are `v<name>` variables, hex or
/// decimal literals, or `slot(<n>)`.
pub fn parse_ir(text: &str) -> Result<IrProgram, ParseError> {
    let mut parser = Parser::default();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        parser.line(i + 1, line)?;
    }
    parser.finish()
}

fn strip_comment(line: &str) -> &str {
    let cut = [line.find('#'), line.find("//")].into_iter().flatten().min();
    match cut {
        Some(i) => &line[..i],
        None => line,
    }
}

#[derive(Default)]
struct Parser {
    address: Option<Address>,
    functions: Vec<IrFunction>,
    current: Option<FnBuilder>,
    // (line, callee) pairs checked after all functions are known
    private_calls: Vec<(usize, String)>,
    uses: Vec<(usize, Var)>,
}

struct FnBuilder {
    func: IrFunction,
    open_block: Option<(String, Vec<Statement>)>,
    labels: BTreeSet<String>,
    line: usize,
}

impl Parser {
    fn line(&mut self, no: usize, line: &str) -> Result<(), ParseError> {
        if let Some(rest) = line.strip_prefix("contract ") {
            if self.address.is_some() {
                return Err(syntax(no, "duplicate contract header"));
            }
            let addr = rest.trim().parse::<Address>().map_err(|e| syntax(no, e.to_string()))?;
            self.address = Some(addr);
            return Ok(());
        }
        if line.starts_with("function ") {
            if self.current.is_some() {
                return Err(syntax(no, "nested function"));
            }
            self.current = Some(FnBuilder::header(no, line)?);
            return Ok(());
        }
        let Some(builder) = self.current.as_mut() else {
            return Err(syntax(no, format!("unexpected `{line}` outside a function")));
        };
        if line == "}" {
            let builder = self.current.take().expect("checked above");
            let func = builder.finish(no)?;
            if self.functions.iter().any(|f| f.name == func.name) {
                return Err(syntax(no, format!("duplicate function `{}`", func.name)));
            }
            self.functions.push(func);
            return Ok(());
        }
        if let Some(rest) = line.strip_prefix("block ") {
            let id = rest.strip_suffix(':').ok_or_else(|| syntax(no, "block header needs `:`"))?.trim();
            if !is_ident(id) {
                return Err(syntax(no, format!("bad block id `{id}`")));
            }
            if builder.open_block.is_some() {
                return Err(syntax(no, "previous block has no terminator"));
            }
            if builder.func.blocks.iter().any(|b| b.id == id) {
                return Err(syntax(no, format!("duplicate block `{id}`")));
            }
            builder.open_block = Some((id.to_string(), Vec::new()));
            return Ok(());
        }
        let Some((block_id, _)) = builder.open_block.as_ref() else {
            return Err(syntax(no, "statement outside a block"));
        };
        let block_id = block_id.clone();
        if let Some(term) = parse_terminator(no, line)? {
            match &term {
                Terminator::JumpI { cond, .. } => self.uses.push((no, cond.clone())),
                Terminator::Return(vals) => self.uses.extend(vals.iter().filter_map(Operand::var).map(|v| (no, v.clone()))),
                Terminator::ReturnPrivate { target, values } => self
                    .uses
                    .extend(target.var().into_iter().chain(values.iter().filter_map(Operand::var)).map(|v| (no, v.clone()))),
                _ => {}
            }
            let (id, statements) = builder.open_block.take().expect("checked above");
            builder.func.blocks.push(IrBlock { id, statements, terminator: term });
            return Ok(());
        }
        let stmt = parse_statement(no, line, &builder.func.name, &block_id)?;
        if !builder.labels.insert(stmt.label.clone()) {
            return Err(syntax(no, format!("duplicate statement label `{}`", stmt.label)));
        }
        self.uses.extend(stmt.var_operands().map(|v| (no, v.clone())));
        if let Op::CallPrivate(callee) = &stmt.op {
            self.private_calls.push((no, callee.clone()));
        }
        builder.open_block.as_mut().expect("checked above").1.push(stmt);
        Ok(())
    }

    fn finish(self) -> Result<IrProgram, ParseError> {
        if let Some(b) = &self.current {
            return Err(syntax(b.line, format!("function `{}` is not closed", b.func.name)));
        }
        let address = self.address.ok_or_else(|| syntax(1, "missing contract header"))?;
        for (_, callee) in &self.private_calls {
            if !self.functions.iter().any(|f| &f.name == callee) {
                return Err(ParseError::DanglingTarget(callee.clone()));
            }
        }
        validate(&self.functions, &self.uses)?;
        Ok(IrProgram::from_parts(address, self.functions))
    }
}

impl FnBuilder {
    fn header(no: usize, line: &str) -> Result<FnBuilder, ParseError> {
        let body = line
            .strip_prefix("function ")
            .and_then(|l| l.trim_end().strip_suffix('{'))
            .ok_or_else(|| syntax(no, "function header must end with `{`"))?;
        let (head, params) = body
            .split_once(" params")
            .ok_or_else(|| syntax(no, "function header needs `params (...)`"))?;
        let words: Vec<&str> = head.split_whitespace().collect();
        let (name, visibility, selector) = match words.as_slice() {
            [name, "public", "sig", sig] => {
                let sel = sig.parse::<Selector>().map_err(|e| syntax(no, e.to_string()))?;
                if !sig.starts_with("0x") {
                    return Err(syntax(no, "selector must be 0x-prefixed"));
                }
                (*name, Visibility::Public, Some(sel))
            }
            [name, "private"] => (*name, Visibility::Private, None),
            _ => return Err(syntax(no, "expected `<name> public sig 0x<8 hex>` or `<name> private`")),
        };
        if !is_ident(name) {
            return Err(syntax(no, format!("bad function name `{name}`")));
        }
        let params = params.trim();
        let inner = params
            .strip_prefix('(')
            .and_then(|p| p.strip_suffix(')'))
            .ok_or_else(|| syntax(no, "params must be parenthesised"))?;
        let mut vars = Vec::new();
        for p in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if !is_var(p) {
                return Err(syntax(no, format!("bad parameter `{p}`")));
            }
            vars.push(Var::new(p));
        }
        Ok(FnBuilder {
            func: IrFunction { name: name.to_string(), visibility, selector, params: vars, blocks: Vec::new() },
            open_block: None,
            labels: BTreeSet::new(),
            line: no,
        })
    }

    fn finish(self, no: usize) -> Result<IrFunction, ParseError> {
        if self.open_block.is_some() {
            return Err(syntax(no, "last block has no terminator"));
        }
        if self.func.blocks.is_empty() {
            return Err(syntax(no, format!("function `{}` has no blocks", self.func.name)));
        }
        for b in &self.func.blocks {
            for t in b.terminator.targets() {
                if self.func.block_index(t).is_none() {
                    return Err(ParseError::DanglingTarget(format!("{}.{}", self.func.name, t)));
                }
            }
            if matches!(b.terminator, Terminator::ReturnPrivate { .. }) && self.func.visibility == Visibility::Public {
                return Err(syntax(no, format!("`returnprivate` in public function `{}`", self.func.name)));
            }
        }
        Ok(self.func)
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_var(s: &str) -> bool {
    s.len() > 1 && s.starts_with('v') && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_operand(no: usize, tok: &str) -> Result<Operand, ParseError> {
    if is_var(tok) {
        return Ok(Operand::Var(Var::new(tok)));
    }
    if let Some(inner) = tok.strip_prefix("slot(").and_then(|t| t.strip_suffix(')')) {
        return parse_word(inner).map(Operand::Slot).map_err(|e| syntax(no, e.to_string()));
    }
    parse_word(tok).map(Operand::Lit).map_err(|_| syntax(no, format!("bad operand `{tok}`")))
}

fn parse_terminator(no: usize, line: &str) -> Result<Option<Terminator>, ParseError> {
    let words: Vec<&str> = line.split_whitespace().collect();
    let term = match words.as_slice() {
        ["jump", t] => Terminator::Jump(t.to_string()),
        ["jump", ..] => return Err(syntax(no, "`jump` takes one target")),
        ["jumpi", c, t, e] => {
            if !is_var(c) {
                return Err(syntax(no, "`jumpi` condition must be a variable"));
            }
            Terminator::JumpI { cond: Var::new(*c), then_target: t.to_string(), else_target: e.to_string() }
        }
        ["jumpi", ..] => return Err(syntax(no, "`jumpi` takes a condition and two targets")),
        ["return", rest @ ..] => {
            Terminator::Return(rest.iter().map(|t| parse_operand(no, t)).collect::<Result<_, _>>()?)
        }
        ["returnprivate", target, rest @ ..] => {
            if rest.len() > 1 {
                return Err(syntax(no, "`returnprivate` returns at most one value"));
            }
            Terminator::ReturnPrivate {
                target: parse_operand(no, target)?,
                values: rest.iter().map(|t| parse_operand(no, t)).collect::<Result<_, _>>()?,
            }
        }
        ["returnprivate"] => return Err(syntax(no, "`returnprivate` needs a target")),
        ["revert"] => Terminator::Revert,
        ["stop"] => Terminator::Stop,
        _ => return Ok(None),
    };
    Ok(Some(term))
}

fn parse_statement(no: usize, line: &str, func: &str, block: &str) -> Result<Statement, ParseError> {
    let (label, rest) = line
        .split_once(':')
        .ok_or_else(|| syntax(no, format!("expected `<label>: ...` or a terminator, got `{line}`")))?;
    let label = label.trim();
    if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(syntax(no, format!("bad statement label `{label}`")));
    }
    let (def, rhs) = match rest.split_once('=') {
        Some((lhs, rhs)) => {
            let lhs = lhs.trim();
            if !is_var(lhs) {
                return Err(syntax(no, format!("bad definition target `{lhs}`")));
            }
            (Some(Var::new(lhs)), rhs)
        }
        None => (None, rest),
    };
    let mut toks = rhs.split_whitespace();
    let name = toks.next().ok_or_else(|| syntax(no, "missing opcode"))?;
    let rest: Vec<&str> = toks.collect();
    let (op, operand_toks): (Op, &[&str]) = match name {
        "CONST" => (Op::Const, &rest),
        "SLOAD" => (Op::Sload, &rest),
        "SSTORE" => (Op::Sstore, &rest),
        "CALLER" => (Op::Caller, &rest),
        "CALLVALUE" => (Op::CallValue, &rest),
        "TIMESTAMP" => (Op::Timestamp, &rest),
        "ADDRESS" => (Op::Address, &rest),
        "BALANCE" => (Op::Balance, &rest),
        "ADD" => (Op::Add, &rest),
        "SUB" => (Op::Sub, &rest),
        "MUL" => (Op::Mul, &rest),
        "DIV" => (Op::Div, &rest),
        "MOD" => (Op::Mod, &rest),
        "LT" => (Op::Lt, &rest),
        "GT" => (Op::Gt, &rest),
        "EQ" => (Op::Eq, &rest),
        "ISZERO" => (Op::IsZero, &rest),
        "AND" => (Op::And, &rest),
        "OR" => (Op::Or, &rest),
        "PHI" => (Op::Phi, &rest),
        "CALL" => (Op::Call, &rest),
        "CALLPRIVATE" => {
            let callee = rest.first().ok_or_else(|| syntax(no, "CALLPRIVATE needs a function name"))?;
            if !is_ident(callee) || is_var(callee) {
                return Err(syntax(no, format!("bad CALLPRIVATE target `{callee}`")));
            }
            (Op::CallPrivate(callee.to_string()), &rest[1..])
        }
        other => return Err(ParseError::UnknownOpcode { line: no, name: other.to_string() }),
    };
    let args = operand_toks.iter().map(|t| parse_operand(no, t)).collect::<Result<Vec<_>, _>>()?;
    check_shape(no, &op, def.is_some(), &args)?;
    Ok(Statement { id: StmtId::new(func, block, label), label: label.to_string(), def, op, args })
}

fn check_shape(no: usize, op: &Op, has_def: bool, args: &[Operand]) -> Result<(), ParseError> {
    let arity_ok = match op {
        Op::Caller | Op::CallValue | Op::Timestamp | Op::Address => args.is_empty(),
        Op::Const => args.len() == 1 && args[0].literal().is_some(),
        Op::Sload | Op::Balance | Op::IsZero => args.len() == 1,
        Op::Sstore => args.len() == 2,
        Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Mod | Op::Lt | Op::Gt | Op::Eq | Op::And | Op::Or => {
            args.len() == 2
        }
        Op::Phi => args.len() == 2,
        Op::CallPrivate(_) => true,
        Op::Call => args.len() >= 2,
    };
    if !arity_ok {
        return Err(syntax(no, format!("wrong operands for {}", op.mnemonic())));
    }
    let def_ok = match op {
        Op::Sstore => !has_def,
        Op::Call | Op::CallPrivate(_) => true,
        _ => has_def,
    };
    if !def_ok {
        let msg = if has_def { "defines no value" } else { "must define a variable" };
        return Err(syntax(no, format!("{} {msg}", op.mnemonic())));
    }
    Ok(())
}

/// Program-wide single-definition and use-before-definition checks.
fn validate(functions: &[IrFunction], uses: &[(usize, Var)]) -> Result<(), ParseError> {
    let mut seen = BTreeSet::new();
    for f in functions {
        for p in &f.params {
            if !seen.insert(p) {
                return Err(ParseError::SsaViolation(p.0.clone()));
            }
        }
        for s in f.statements() {
            if let Some(d) = &s.def {
                if !seen.insert(d) {
                    return Err(ParseError::SsaViolation(d.0.clone()));
                }
            }
        }
    }
    for (line, u) in uses {
        if !seen.contains(u) {
            return Err(syntax(*line, format!("use of undefined variable `{u}`")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "contract 0x00000000000000000000000000000000000000aa\n";

    #[test]
    fn minimal_program() {
        let text = format!(
            "{HEADER}function f public sig 0x12345678 params () {{\n  block B0:\n    s1: v1 = CONST 0x64\n    stop\n}}\n"
        );
        let p = parse_ir(&text).unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.functions[0].blocks.len(), 1);
        assert_eq!(p.functions[0].blocks[0].statements.len(), 1);
        let s = &p.functions[0].blocks[0].statements[0];
        assert_eq!(s.id.as_str(), "f.B0.s1");
        assert_eq!(s.args, vec![Operand::Lit(100.into())]);
    }

    #[test]
    fn double_definition_is_rejected() {
        let text = format!(
            "{HEADER}function f public sig 0x12345678 params () {{\n block B0:\n  s1: v1 = CONST 1\n  s2: v1 = CONST 2\n  stop\n}}\n"
        );
        assert_eq!(parse_ir(&text).unwrap_err(), ParseError::SsaViolation("v1".into()));
    }

    #[test]
    fn parameter_clash_is_an_ssa_violation() {
        let text = format!(
            "{HEADER}function f public sig 0x12345678 params (v1) {{\n block B0:\n  s1: v1 = CONST 1\n  stop\n}}\n"
        );
        assert_eq!(parse_ir(&text).unwrap_err(), ParseError::SsaViolation("v1".into()));
    }

    #[test]
    fn unknown_opcode() {
        let text = format!("{HEADER}function f public sig 0x12345678 params () {{\n block B0:\n  s1: v1 = KECCAK vX\n  stop\n}}\n");
        assert!(matches!(parse_ir(&text), Err(ParseError::UnknownOpcode { name, .. }) if name == "KECCAK"));
    }

    #[test]
    fn dangling_targets() {
        let text = format!("{HEADER}function f public sig 0x12345678 params () {{\n block B0:\n  jump B9\n}}\n");
        assert_eq!(parse_ir(&text).unwrap_err(), ParseError::DanglingTarget("f.B9".into()));
        let text = format!(
            "{HEADER}function f public sig 0x12345678 params () {{\n block B0:\n  s1: v1 = CALLPRIVATE g\n  stop\n}}\n"
        );
        assert_eq!(parse_ir(&text).unwrap_err(), ParseError::DanglingTarget("g".into()));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let text = format!("{HEADER}function f public sig 0x12345678 params () {{\n block B0:\n  s1: v1 = ADD v1\n  stop\n}}\n");
        assert!(matches!(parse_ir(&text), Err(ParseError::Syntax { line: 4, .. })));
        let text = format!("{HEADER}function f public params () {{\n block B0:\n  stop\n}}\n");
        assert!(matches!(parse_ir(&text), Err(ParseError::Syntax { line: 2, .. })));
        let text = format!("{HEADER}function f private params () {{\n block B0:\n  s1: SSTORE slot(1) 5\n}}\n");
        assert!(matches!(parse_ir(&text), Err(ParseError::Syntax { line: 5, .. })));
    }

    #[test]
    fn undefined_use_is_rejected() {
        let text = format!("{HEADER}function f public sig 0x12345678 params () {{\n block B0:\n  s1: SSTORE slot(1) vX\n  stop\n}}\n");
        assert!(matches!(parse_ir(&text), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn call_forms() {
        let text = format!(
            "{HEADER}function f public sig 0x12345678 params (vT, vV, vR, vA) {{\n block B0:\n  s1: v1 = CONST 0xa9059cbb\n  s2: v9 = CALL vT vV v1 vR vA\n  s3: CALL vT vV\n  stop\n}}\n"
        );
        let p = parse_ir(&text).unwrap();
        let s2 = p.statement(&StmtId("f.B0.s2".into())).unwrap();
        let (t, v, sig, abi) = s2.call_parts().unwrap();
        assert_eq!(t.to_string(), "vT");
        assert_eq!(v.to_string(), "vV");
        assert_eq!(sig.unwrap().to_string(), "v1");
        assert_eq!(abi.len(), 2);
        let s3 = p.statement(&StmtId("f.B0.s3".into())).unwrap();
        assert!(s3.call_parts().unwrap().2.is_none());
    }
}
