use gems::convert::{kinds_from_levels, mixed_from_rows};
use gems_core::VarKind;

#[test]
fn mixed_rows_become_a_typed_dataset() {
    let rows = vec![vec![Some(0.5), Some(1.0)], vec![None, Some(0.0)], vec![Some(-1.0), None]];
    let ds = mixed_from_rows(&rows, &[0, 2]).unwrap();
    assert_eq!((ds.n(), ds.width()), (3, 2));
    assert_eq!(ds.kinds(), vec![VarKind::Continuous, VarKind::Categorical { levels: 2 }]);
    assert_eq!(ds.missing_count(), 2);
    assert_eq!(ds.columns()[1].name, "x1");
}

#[test]
fn malformed_rows_are_rejected() {
    assert!(mixed_from_rows(&[vec![Some(1.0)], vec![Some(1.0), Some(2.0)]], &[0]).is_err());
    // Level 2 does not exist in a binary column.
    assert!(mixed_from_rows(&[vec![Some(2.0)]], &[2]).is_err());
    assert!(kinds_from_levels(&[0, 1]).is_err());
}
