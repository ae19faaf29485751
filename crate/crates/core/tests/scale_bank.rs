//! A full-size bank of 59,798 questions stays well inside 1 GB.
//! Kept alone in its own test binary so the peak-RSS reading is not polluted.

mod common;

use lqb_core::metrics::{evaluate, GroupBy};
use lqb_core::qbank::{load_bank, save_bank};

const FULL_BANK: usize = 59_798;
const BUDGET_KIB: u64 = 1024 * 1024;

#[test]
fn full_size_bank_round_trips_within_memory_budget() {
    let (corpus, bank) = common::synthetic(2_000, FULL_BANK);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bank.jsonl");
    save_bank(&bank, &path).unwrap();
    drop(bank);

    let loaded = load_bank(&path, &corpus).unwrap();
    assert_eq!(loaded.len(), FULL_BANK);
    let report = evaluate(&loaded, &corpus, GroupBy::Source);
    assert_eq!(report.groups[0].question_count, FULL_BANK);

    if let Some(peak) = common::peak_rss_kib() {
        eprintln!("peak RSS {} MiB", peak / 1024);
        assert!(peak < BUDGET_KIB, "peak RSS {peak} KiB");
    }
}
