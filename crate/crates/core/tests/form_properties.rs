mod support;

#[test]
fn d_squared_is_zero() {
    support::d_squared_is_zero().unwrap();
}

#[test]
fn wedge_is_graded_leibniz() {
    support::wedge_is_graded_leibniz().unwrap();
}

#[test]
fn vector_fields_satisfy_jacobi() {
    support::vector_field_jacobi().unwrap();
}

#[test]
fn expansion_in_a_coframe_round_trips() {
    support::expansion_round_trips().unwrap();
}
