use super::*;

#[test]
fn single_replicate_has_zero_ese() {
    let design = StudyDesign::standard(Generator::Sim2, 200, 1, 3, false);
    let out = run_study(&design).unwrap();
    assert_eq!(out.table.rows.len(), 9);
    for row in &out.table.rows {
        assert_eq!(row.ese, 0.0);
        let rec = out
            .records
            .iter()
            .find(|r| r.method == row.method && r.parameter == row.parameter)
            .unwrap();
        assert!((row.bias - 100.0 * (rec.estimate - row.truth)).abs() < 1e-9);
        assert!(row.cov_uc == 0.0 || row.cov_uc == 100.0);
    }
}

#[test]
fn studies_are_reproducible() {
    let design = StudyDesign::standard(Generator::Sim3, 300, 3, 7, false);
    let a = run_study(&design).unwrap();
    let b = run_study(&design).unwrap();
    assert_eq!(a.table, b.table);
    assert_eq!(a.table.rows.len(), 12);
}

#[test]
fn zero_replicates_are_rejected() {
    let design = StudyDesign::standard(Generator::Sim1, 100, 0, 1, false);
    assert!(run_study(&design).is_err());
}
