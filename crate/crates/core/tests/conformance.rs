mod common;

use compchall::protocol::Variant;

#[test]
fn codec_vectors_match() {
    let n = common::check_codec_vectors().unwrap();
    assert!(n >= 10, "only {n} vectors");
}

#[test]
fn transcripts_replay_identically() {
    assert_eq!(common::check_transcripts().unwrap(), 3);
}

#[test]
fn transcript_shapes() {
    for (variant, lines) in common::pinned_transcripts() {
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("LOGIN "));
        let fields = lines[1].split(' ').count();
        assert_eq!(fields, if variant == Variant::Lamport { 6 } else { 5 }, "{variant}");
        assert_eq!(lines[3], "RESULT OK");
    }
}

#[test]
fn transcripts_are_seed_dependent() {
    // Same seed, same user: identical. The pinned file is only meaningful
    // if this holds.
    assert_eq!(common::golden_transcript(Variant::Base), common::golden_transcript(Variant::Base));
}
