mod common;

use dappcheck::analysis::analyze;
use dappcheck::sigdb::SignatureDb;
use dappcheck::Selector;

fn public_selectors(name: &str) -> Vec<Selector> {
    common::load(name).program.functions.iter().filter_map(|f| f.selector).collect()
}

#[test]
fn guidance_plans_only_the_two_finance_functions() {
    let b = common::load("guidance");
    assert_eq!(public_selectors("guidance").len(), 12);
    let sa = analyze(b.program, &SignatureDb::builtin());
    let planned: Vec<String> = sa.plan.selectors().map(|s| s.to_string()).collect();
    // mint(address,uint256) and withdraw()
    assert_eq!(planned, ["0x3ccfd60b", "0x40c10f19"]);
}

#[test]
fn corpus_plans_at_most_half_the_public_functions() {
    let mut public = 0;
    let mut planned = 0;
    for name in common::corpus().keys() {
        public += public_selectors(name).len();
        planned += common::run(name).analysis.plan.entries.len();
    }
    assert!(planned * 2 <= public, "{planned} of {public} public functions planned");
}

#[test]
fn guidance_contract_is_consistent_with_its_claims() {
    assert!(common::run("guidance").report.findings.is_empty());
}
