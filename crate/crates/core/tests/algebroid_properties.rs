mod support;

#[test]
fn algebroid_differential_squares_to_zero() {
    support::algebroid_d_squared_is_zero().unwrap();
}

#[test]
fn brackets_satisfy_jacobi_in_any_basis() {
    support::bracket_jacobi().unwrap();
}
