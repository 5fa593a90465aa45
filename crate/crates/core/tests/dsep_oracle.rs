#[path = "common/oracle.rs"]
mod oracle;

#[test]
fn oracle_on_textbook_shapes() {
    // Chain, fork and collider on three nodes.
    assert!(!oracle::d_separated(3, &[(0, 1), (1, 2)], 0, 2, &[]));
    assert!(oracle::d_separated(3, &[(0, 1), (1, 2)], 0, 2, &[1]));
    assert!(oracle::d_separated(3, &[(1, 0), (1, 2)], 0, 2, &[1]));
    assert!(oracle::d_separated(3, &[(0, 1), (2, 1)], 0, 2, &[]));
    assert!(!oracle::d_separated(3, &[(0, 1), (2, 1)], 0, 2, &[1]));
    // Conditioning on a collider's descendant opens it.
    assert!(!oracle::d_separated(
        4,
        &[(0, 1), (2, 1), (1, 3)],
        0,
        2,
        &[3]
    ));
}

#[test]
fn library_agrees_with_oracle_on_all_dags_up_to_six_nodes() {
    for n in 2..=6 {
        let (checked, mismatch) = oracle::exhaustive_check(n);
        assert!(mismatch.is_none(), "{}", mismatch.unwrap());
        assert!(checked > 0);
    }
}
