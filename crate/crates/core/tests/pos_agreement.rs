//! Noun test versus frozen labels from an independent statistical tagger.

use kbe_core::lexicon::{pos_is_noun, NounLexicon};

const FIXTURE: &str = include_str!("fixtures/pos_answers.tsv");

#[test]
fn noun_test_agrees_with_reference_tagger() {
    let lexicon = NounLexicon::bundled();
    let mut total = 0usize;
    let mut agree = 0usize;
    let mut misses = Vec::new();
    for line in FIXTURE.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 3, "bad fixture line {line:?}");
        let expected = cols[2] == "noun";
        let got = pos_is_noun(cols[0], &lexicon).unwrap();
        total += 1;
        if got == expected {
            agree += 1;
        } else {
            misses.push(cols[0]);
        }
    }
    assert_eq!(total, 200);
    let rate = agree as f64 / total as f64;
    println!("agreement {agree}/{total} = {rate:.3}; disagreements: {misses:?}");
    assert!(rate >= 0.95, "agreement {rate:.3} below 0.95: {misses:?}");
}
