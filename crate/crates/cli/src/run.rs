use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use dappcheck::chain::{ChainState, MockChain, RpcChain, RpcConfig};
use dappcheck::frontend::{
    describe_to_attributes, CannedLlm, FrontendAttributes, HttpLlm, LlmClient, Synonyms, Templates, WordTokenizer,
};
use dappcheck::ir::{parse_ir, IrProgram};
use dappcheck::pipeline::{self, Bundle, ContractRun, PipelineOptions};
use dappcheck::sigdb::SignatureDb;
use dappcheck::symexec::{Limits, SummaryOptions};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::{AuditArgs, ChainArgs, LimitArgs, LlmArgs};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_ir(path: &Path) -> Result<IrProgram> {
    parse_ir(&read(path)?).with_context(|| format!("{}", path.display()))
}

fn limits(args: &LimitArgs) -> Result<Limits> {
    let d = Limits::default();
    let l = Limits {
        max_depth: args.max_depth.unwrap_or(d.max_depth),
        loop_bound: args.loop_bound.unwrap_or(d.loop_bound),
        max_states: args.max_states.unwrap_or(d.max_states),
    };
    l.validate()?;
    Ok(l)
}

fn chain(args: &ChainArgs, limits: &LimitArgs) -> Result<Option<Box<dyn ChainState>>> {
    if let Some(p) = &args.chain {
        let mock = MockChain::from_json(&read(p)?).with_context(|| format!("{}", p.display()))?;
        return Ok(Some(Box::new(mock)));
    }
    Ok(args.rpc_url.as_ref().map(|url| {
        let config = RpcConfig { chain_id: limits.chain_id, ..RpcConfig::new(url.clone()) };
        Box::new(RpcChain::new(config)) as Box<dyn ChainState>
    }))
}

fn extraction_inputs(llm: &LlmArgs) -> Result<(Templates, Synonyms)> {
    let templates = match &llm.templates {
        Some(dir) => Templates::from_dir(dir).with_context(|| format!("{}", dir.display()))?,
        None => Templates::builtin(),
    };
    let synonyms = match &llm.synonyms {
        Some(dir) => Synonyms::from_dir(dir).with_context(|| format!("{}", dir.display()))?,
        None => Synonyms::builtin(),
    };
    Ok((templates, synonyms))
}

fn describe(path: &Path, llm: &LlmArgs) -> Result<dappcheck::frontend::Extraction> {
    let text = read(path)?;
    let (templates, synonyms) = extraction_inputs(llm)?;
    let client: Box<dyn LlmClient> = match (&llm.canned, &llm.llm_url) {
        (Some(p), _) => Box::new(CannedLlm::from_json(&templates, &read(p)?).with_context(|| format!("{}", p.display()))?),
        (None, Some(url)) => Box::new(HttpLlm::new(url.clone(), Duration::from_secs(llm.llm_timeout_secs))),
        (None, None) => bail!("--description needs --llm-url, LLM_ENDPOINT_URL or --canned"),
    };
    let e = describe_to_attributes(&text, client.as_ref(), &templates, &synonyms, &WordTokenizer, llm.segment_tokens)?;
    for w in &e.warnings {
        eprintln!("warning: {}", serde_json::to_string(w)?);
    }
    Ok(e)
}

fn options(args: &AuditArgs) -> Result<PipelineOptions> {
    Ok(PipelineOptions { limits: limits(&args.limits)?, summary: SummaryOptions { strict_uts: args.strict_uts } })
}

/// Returns whether anything was found.
pub fn audit(args: &AuditArgs) -> Result<bool> {
    if args.jobs == 0 {
        bail!("--jobs must be positive");
    }
    match (&args.ir, &args.dir) {
        (Some(ir), _) => audit_one(ir, args),
        (None, Some(dir)) => audit_dir(dir, args),
        (None, None) => bail!("one of --ir or --dir is required"),
    }
}

fn audit_one(ir: &Path, args: &AuditArgs) -> Result<bool> {
    let attrs = match (&args.claims.attrs, &args.claims.description) {
        (Some(p), _) => FrontendAttributes::from_json(&read(p)?).with_context(|| format!("{}", p.display()))?,
        (None, Some(p)) => describe(p, &args.llm)?.attributes,
        (None, None) => bail!("one of --attrs or --description is required"),
    };
    let program = load_ir(ir)?;
    let chain = chain(&args.chain, &args.limits)?;
    let run = pipeline::audit(program, &attrs, chain.as_deref(), &SignatureDb::builtin(), options(args)?)
        .with_context(|| format!("{}", ir.display()))?;
    if let Some(dir) = &args.facts_dump {
        dump_facts(&run, dir)?;
    }
    write_out(args.out.as_deref(), &run.report.to_json())?;
    Ok(!run.report.findings.is_empty())
}

fn dump_facts(run: &ContractRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    dappcheck::facts::dump_tsv(&run.analysis.facts, dir).with_context(|| format!("cannot write {}", dir.display()))
}

/// Bundles are audited independently; output order follows the sorted
/// directory names whatever `--jobs` is.
fn audit_dir(root: &Path, args: &AuditArgs) -> Result<bool> {
    let dirs = pipeline::bundle_dirs(root).with_context(|| format!("cannot list {}", root.display()))?;
    let opts = options(args)?;
    let fallback = chain(&args.chain, &args.limits)?;
    let sigs = SignatureDb::builtin();
    let one = |dir: &PathBuf| -> Result<(String, ContractRun)> {
        let b = Bundle::load(dir)?;
        let run = match (&b.chain, &fallback) {
            (Some(_), _) | (None, None) => b.audit(&sigs, opts),
            (None, Some(c)) => pipeline::audit(b.program.clone(), &b.attrs, Some(c.as_ref()), &sigs, opts),
        }
        .with_context(|| format!("{}", dir.display()))?;
        Ok((b.name, run))
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let results: Vec<Result<(String, ContractRun)>> = pool.install(|| dirs.par_iter().map(one).collect());
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    }
    let mut found = false;
    let mut errors = 0;
    for r in results {
        match r {
            Ok((name, run)) => {
                found |= !run.report.findings.is_empty();
                let kinds: Vec<String> = run.report.kinds().iter().map(|k| k.to_string()).collect();
                match &args.out {
                    Some(out) => {
                        let path = out.join(format!("{name}.json"));
                        std::fs::write(&path, run.report.to_json())
                            .with_context(|| format!("cannot write {}", path.display()))?;
                        if let Some(facts) = &args.facts_dump {
                            dump_facts(&run, &facts.join(&name))?;
                        }
                        println!("{name}\t{}", kinds.join(","));
                    }
                    None => print!("{}", run.report.to_json()),
                }
            }
            Err(e) => {
                errors += 1;
                eprintln!("error: {e:#}");
            }
        }
    }
    if errors > 0 {
        bail!("{errors} of {} contracts failed", dirs.len());
    }
    Ok(found)
}

pub fn facts(ir: &Path, out: &Path) -> Result<()> {
    let program = load_ir(ir)?;
    let db = dappcheck::facts::derive_facts(&program);
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    dappcheck::facts::dump_tsv(&db, out).with_context(|| format!("cannot write {}", out.display()))
}

pub fn symexec(ir: &Path, chain_args: &ChainArgs, limit_args: &LimitArgs, out: Option<&Path>) -> Result<()> {
    let limits = limits(limit_args)?;
    let sa = dappcheck::analysis::analyze(load_ir(ir)?, &SignatureDb::builtin());
    let chain = chain(chain_args, limit_args)?;
    let fixed = chain.as_deref().map(|c| pipeline::fixed_storage(&sa, c));
    let results = pipeline::execute_plan(&sa, limits, fixed.as_ref()).with_context(|| format!("{}", ir.display()))?;
    let functions: Vec<Value> = results
        .iter()
        .map(|r| {
            let checkpoints: Vec<Value> = r
                .checkpoints
                .iter()
                .map(|cp| {
                    json!({
                        "site": cp.site.to_string(),
                        "captured": cp.captured,
                        "path": cp.path,
                        "feasibility": cp.feasibility,
                    })
                })
                .collect();
            json!({
                "selector": r.selector.to_string(),
                "states": r.states,
                "budget_exceeded": r.budget_exceeded,
                "checkpoints": checkpoints,
            })
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&functions)?;
    text.push('\n');
    write_out(out, &text)
}

pub fn extract(description: &Path, llm: &LlmArgs, out: Option<&Path>) -> Result<()> {
    let e = describe(description, llm)?;
    let mut text = e.attributes.to_json();
    text.push('\n');
    write_out(out, &text)
}
