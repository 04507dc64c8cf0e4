use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use super::FactDb;
use crate::word::word_hex;

/// Renders each relation as tab-separated rows, keyed by file name.
pub fn relation_tables(db: &FactDb) -> BTreeMap<&'static str, String> {
    let mut out = BTreeMap::new();
    let mut put = |name: &'static str, rows: Vec<String>| {
        let mut text = String::new();
        for r in rows {
            let _ = writeln!(text, "{r}");
        }
        out.insert(name, text);
    };
    put("Constant.tsv", db.constant.iter().map(|(v, w)| format!("{v}\t{}", word_hex(w))).collect());
    put(
        "ExternalCall.tsv",
        db.external_call.iter().map(|(s, t, g)| format!("{s}\t{t}\t{g}")).collect(),
    );
    put("CallArg.tsv", db.call_arg.iter().map(|(s, a, i)| format!("{s}\t{a}\t{i}")).collect());
    put("PlainCall.tsv", db.plain_call.iter().map(|(s, t, v)| format!("{s}\t{t}\t{v}")).collect());
    put("Controls.tsv", db.controls.iter().map(|(c, s)| format!("{c}\t{s}")).collect());
    put(
        "MathOp.tsv",
        db.math_op.iter().map(|m| format!("{}\t{}\t{}\t{}", m.def, m.op.mnemonic(), m.lhs, m.rhs)).collect(),
    );
    put("FuncArg.tsv", db.func_arg.iter().map(|(s, v)| format!("{s}\t{v}")).collect());
    put("DataFlow.tsv", db.df_pairs().iter().map(|(a, b)| format!("{a}\t{b}")).collect());
    put(
        "StatementFunc.tsv",
        db.stmt_func
            .iter()
            .flat_map(|(s, sels)| sels.iter().map(move |sel| format!("{s}\t{sel}")))
            .collect(),
    );
    put(
        "Comp.tsv",
        db.comp.iter().map(|m| format!("{}\t{}\t{}\t{}", m.def, m.op.mnemonic(), m.lhs, m.rhs)).collect(),
    );
    out
}

/// Writes one TSV file per relation into `dir`.
pub fn dump_tsv(db: &FactDb, dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in relation_tables(db) {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}
