//! One check per acceptance criterion. Each returns a short summary on
//! success and the first problem found otherwise.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use dappcheck::analysis::analyze;
use dappcheck::chain::{classify_uri, ChainState, MockChain, UriStorage};
use dappcheck::detector::FindingKind;
use dappcheck::frontend::{
    extract_attributes, segment, BoolAttr, LabeledResponse, Percent, Synonyms, Tokenizer, WordTokenizer,
    DEFAULT_SEGMENT_TOKENS,
};
use dappcheck::ir::parse_ir;
use dappcheck::pipeline::PipelineOptions;
use dappcheck::sigdb::SignatureDb;
use dappcheck::{Address, Word};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use super::random_ir::{random_program, rng, GenConfig};
use super::{concrete, corpus, load, oracle, run};

pub type Check = Result<String, String>;

pub const CORPUS_BUDGET: Duration = Duration::from_secs(30);

pub fn fixture_findings() -> Check {
    let start = Instant::now();
    let expected = corpus();
    let (mut fp, mut fn_) = (0, 0);
    let mut problems = Vec::new();
    for (name, want) in &expected {
        let got = run(name).report.kinds();
        let extra: Vec<_> = got.difference(want).collect();
        let missing: Vec<_> = want.difference(&got).collect();
        fp += extra.len();
        fn_ += missing.len();
        if !extra.is_empty() || !missing.is_empty() {
            problems.push(format!("{name}: extra {extra:?} missing {missing:?}"));
        }
    }
    let elapsed = start.elapsed();
    let twins = expected.iter().filter(|(_, k)| k.is_empty()).count();
    if twins * 2 != expected.len() {
        return Err(format!("{} runs but {twins} clean twins", expected.len()));
    }
    if !problems.is_empty() {
        return Err(format!("{fp} FP, {fn_} FN: {}", problems.join("; ")));
    }
    if elapsed > CORPUS_BUDGET {
        return Err(format!("corpus took {elapsed:?}"));
    }
    Ok(format!("{} runs, 0 FP, 0 FN, {:.2}s", expected.len(), elapsed.as_secs_f64()))
}

pub fn relations_match_oracle(seed: u64, programs: usize) -> Check {
    let mut r = rng(seed);
    for i in 0..programs {
        let g = random_program(&mut r, GenConfig::default());
        if g.statements > 30 {
            return Err(format!("program {i} has {} statements", g.statements));
        }
        let p = parse_ir(&g.text).map_err(|e| format!("program {i}: {e}"))?;
        if let Some(d) = oracle::disagreement(&p) {
            return Err(format!("program {i}: {d}"));
        }
    }
    Ok(format!("{programs} programs agree on dataflow, transfer, sender guard and storage role"))
}

pub fn checkpoints_match_interpreter(seed: u64, cases: usize) -> Check {
    let compared = concrete::run_cases(seed, cases)?;
    if compared < cases / 2 {
        return Err(format!("only {compared} captures reached in {cases} cases"));
    }
    Ok(format!("{cases} cases, {compared} captures equal"))
}

pub fn dev_fee_rate() -> Check {
    let sigs = SignatureDb::builtin();
    let opts = PipelineOptions::default();
    let mut b = load("bnb_ultra_buy");
    let hf = |b: &dappcheck::pipeline::Bundle| -> Result<Option<String>, String> {
        let r = b.audit(&sigs, opts).map_err(|e| e.to_string())?;
        Ok(r.report.findings.iter().find(|f| f.kind == FindingKind::HF).map(|f| f.computed_rate.clone().unwrap_or_default()))
    };
    match hf(&b)? {
        Some(rate) if rate == "5/100" => {}
        other => return Err(format!("against 3%: HF rate {other:?}")),
    }
    b.attrs.fee_rate_percent = None;
    b.attrs.fee_claimed = false;
    match hf(&b)? {
        Some(rate) if rate == "5/100" => {}
        other => return Err(format!("against no fee claim: HF rate {other:?}")),
    }
    b.attrs.fee_rate_percent = Some(Percent::from_integer(5));
    b.attrs.fee_claimed = true;
    if let Some(rate) = hf(&b)? {
        return Err(format!("HF {rate} against a matching 5% claim"));
    }
    Ok("computed 5/100; HF against 3% and against no claim".into())
}

pub fn plan_coverage() -> Check {
    let b = load("guidance");
    let public = b.program.functions.iter().filter(|f| f.selector.is_some()).count();
    let sa = analyze(b.program, &SignatureDb::builtin());
    let planned: BTreeSet<String> = sa.plan.selectors().map(|s| s.to_string()).collect();
    // mint(address,uint256) and withdraw()
    let want: BTreeSet<String> = ["0x40c10f19", "0x3ccfd60b"].map(String::from).into();
    if public != 12 || planned != want {
        return Err(format!("guidance: {public} public, planned {planned:?}"));
    }
    let (mut all, mut planned) = (0, 0);
    for name in corpus().keys() {
        let r = run(name);
        all += r.analysis.program.functions.iter().filter(|f| f.selector.is_some()).count();
        planned += r.analysis.plan.entries.len();
    }
    if planned * 2 > all {
        return Err(format!("corpus plans {planned} of {all} public functions"));
    }
    Ok(format!("guidance plans 2 of 12; corpus plans {planned} of {all}"))
}

/// Random prose of exactly `tokens` word-tokenizer tokens.
pub fn random_text(r: &mut ChaCha8Rng, tokens: usize) -> String {
    const PUNCT: [&str; 8] = [".", ",", "%", "$", "(", ")", ":", "€"];
    const SPACE: [&str; 5] = [" ", " ", " ", "\n", "\n\n  "];
    let mut out = String::new();
    for i in 0..tokens {
        if i > 0 && r.random_bool(0.8) {
            out.push_str(SPACE[r.random_range(0..SPACE.len())]);
        }
        if r.random_bool(0.15) {
            out.push_str(PUNCT[r.random_range(0..PUNCT.len())]);
            continue;
        }
        if !out.is_empty() && !out.ends_with(char::is_whitespace) && !out.ends_with(|c: char| !c.is_alphanumeric()) {
            out.push(' ');
        }
        for _ in 0..r.random_range(1..10) {
            let c = match r.random_range(0..20) {
                0 => 'é',
                1 => '7',
                n => (b'a' + n as u8) as char,
            };
            out.push(c);
        }
    }
    out
}

pub fn segmentation(seed: u64, seeds: u64) -> Check {
    let mut longest = 0;
    for s in 0..seeds {
        let mut r = rng(seed.wrapping_add(s));
        let tokens = r.random_range(0..=20_000);
        let text = random_text(&mut r, tokens);
        let pieces = segment(&text, &WordTokenizer, DEFAULT_SEGMENT_TOKENS);
        if pieces.concat() != text {
            return Err(format!("seed {s}: pieces do not concatenate back"));
        }
        for p in &pieces {
            let n = WordTokenizer.count(p);
            longest = longest.max(n);
            if n > DEFAULT_SEGMENT_TOKENS {
                return Err(format!("seed {s}: a piece has {n} tokens"));
            }
        }
    }
    Ok(format!("{seeds} texts, longest piece {longest} tokens"))
}

const PHRASINGS: [&str; 4] = [
    "Users obtain a daily profit of 3% on the amount they deposit. It claims a total supply of 250M tokens.",
    "Daily ROI: 3%\nTotal supply: 250,000,000\nLiquidity lock: 5 years",
    "Earn 3% rewards every day. Max supply is 250 million. We provide a 5-year liquidity lock.",
    "APY 3 %. The liquidity is locked for 1825 days and the total supply is 0.25B.",
];

pub fn extraction() -> Check {
    let syn = Synonyms::builtin();
    for text in PHRASINGS {
        let responses = [
            LabeledResponse::numeric(text),
            LabeledResponse::boolean(BoolAttr::Pause, "Answer: yes, the owner may pause trades."),
            LabeledResponse::boolean(BoolAttr::FundFlow, "The text is silent on this. Answer: no."),
        ];
        let a = extract_attributes(&responses, &syn).attributes;
        let reward = a.reward_rate_percent.as_ref().map(|p| p.to_string());
        if reward.as_deref() != Some("3") || a.total_supply != Some(250_000_000) || !a.pause_disclosed || a.fund_flow_disclosed {
            return Err(format!("{text:?}: reward {reward:?} supply {:?}", a.total_supply));
        }
        if text.contains("lock") && a.lock_time_seconds != Some(157_680_000) {
            return Err(format!("{text:?}: lock {:?}", a.lock_time_seconds));
        }
    }
    Ok(format!("{} phrasings give 3, 250000000, 157680000, true/false", PHRASINGS.len()))
}

/// A string of exactly `len` UTF-8 bytes.
pub fn random_string(r: &mut ChaCha8Rng, len: usize) -> String {
    let mut s = String::new();
    while s.len() < len {
        let c = if len - s.len() >= 2 && r.random_bool(0.1) { 'ß' } else { (b' ' + r.random_range(0..95u8)) as char };
        s.push(c);
    }
    s
}

pub fn storage_strings(seed: u64, count: usize) -> Check {
    let mut r = rng(seed);
    let address: Address = "0x00000000000000000000000000000000000000aa".parse().unwrap();
    for i in 0..count {
        let len = r.random_range(0..=96);
        let text = random_string(&mut r, len);
        let slot = Word::from(r.random_range(0..16u64));
        let chain = MockChain::new().with_string(address, slot, &text);
        match chain.read_string_at(&address, slot) {
            Ok(back) if back == text => {}
            other => return Err(format!("string {i} ({} bytes): read back {other:?}", text.len())),
        }
    }
    let mut checked = 0;
    for name in corpus().keys() {
        let run = run(name);
        let b = load(name);
        let (Some(slot), Some(chain)) = (run.semantics.token_uri_slot, b.chain.as_ref()) else { continue };
        let uri = chain.read_string_at(&b.program.contract_address, slot).map_err(|e| format!("{name}: {e}"))?;
        let want = classify_uri(&uri) == UriStorage::Centralized && b.attrs.nft_permanence_claimed == Some(true);
        if run.report.kinds().contains(&FindingKind::VNA) != want {
            return Err(format!("{name}: {uri} classified inconsistently"));
        }
        checked += 1;
    }
    if checked == 0 {
        return Err("no fixture stores a token URI".into());
    }
    Ok(format!("{count} strings round-trip; {checked} fixture URIs follow the scheme table"))
}

pub fn corpus_reports(runs: usize) -> Vec<String> {
    (0..runs)
        .map(|_| corpus().keys().map(|name| run(name).report.to_json()).collect::<Vec<_>>().join("\n"))
        .collect()
}

pub fn deterministic_reports() -> Check {
    let reports = corpus_reports(3);
    if reports.windows(2).any(|w| w[0] != w[1]) {
        return Err("reports differ between runs".into());
    }
    Ok(format!("3 runs, {} identical bytes each", reports[0].len()))
}
