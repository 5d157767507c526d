use intentbot::textproc::porter_stem;

const VOCABULARY: &str = include_str!("data/porter_voc.txt");
const EXPECTED: &str = include_str!("data/porter_output.txt");

#[test]
fn matches_canonical_vocabulary() {
    let words: Vec<&str> = VOCABULARY.lines().collect();
    let stems: Vec<&str> = EXPECTED.lines().collect();
    assert_eq!(words.len(), stems.len());
    assert_eq!(words.len(), 23531);

    let mismatches: Vec<_> = words
        .iter()
        .zip(&stems)
        .filter(|(w, s)| porter_stem(w) != **s)
        .map(|(w, s)| format!("{w}: got {}, want {s}", porter_stem(w)))
        .collect();
    assert!(mismatches.is_empty(), "{} mismatches, first: {:?}", mismatches.len(), &mismatches[..mismatches.len().min(10)]);
}
