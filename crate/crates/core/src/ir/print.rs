use std::fmt::Write;

use super::{IrProgram, Op, Terminator, Visibility};

/// Renders a program in the grammar accepted by [`super::parse_ir`].
pub fn print_ir(program: &IrProgram) -> String {
    let mut out = String::new();
    writeln!(out, "contract {}", program.contract_address).unwrap();
    for f in &program.functions {
        let params: Vec<String> = f.params.iter().map(|p| p.to_string()).collect();
        match f.visibility {
            Visibility::Public => {
                let sel = f.selector.expect("public functions carry a selector");
                writeln!(out, "function {} public sig {} params ({}) {{", f.name, sel, params.join(", ")).unwrap();
            }
            Visibility::Private => {
                writeln!(out, "function {} private params ({}) {{", f.name, params.join(", ")).unwrap();
            }
        }
        for b in &f.blocks {
            writeln!(out, "  block {}:", b.id).unwrap();
            for s in &b.statements {
                write!(out, "    {}: ", s.label).unwrap();
                if let Some(d) = &s.def {
                    write!(out, "{d} = ").unwrap();
                }
                out.push_str(s.op.mnemonic());
                if let Op::CallPrivate(callee) = &s.op {
                    write!(out, " {callee}").unwrap();
                }
                for a in &s.args {
                    write!(out, " {a}").unwrap();
                }
                out.push('\n');
            }
            let term = match &b.terminator {
                Terminator::Jump(t) => format!("jump {t}"),
                Terminator::JumpI { cond, then_target, else_target } => {
                    format!("jumpi {cond} {then_target} {else_target}")
                }
                Terminator::Return(vals) => {
                    std::iter::once("return".to_string()).chain(vals.iter().map(|v| v.to_string())).collect::<Vec<_>>().join(" ")
                }
                Terminator::ReturnPrivate { target, values } => std::iter::once(format!("returnprivate {target}"))
                    .chain(values.iter().map(|v| v.to_string()))
                    .collect::<Vec<_>>()
                    .join(" "),
                Terminator::Revert => "revert".to_string(),
                Terminator::Stop => "stop".to_string(),
            };
            writeln!(out, "    {term}").unwrap();
        }
        out.push_str("}\n");
    }
    out
}
