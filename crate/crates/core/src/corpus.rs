//! Example problem files bundled with the library.

/// `(name, source)` for every bundled example.
pub const EXAMPLES: [(&str, &str); 10] = [
    ("flat", include_str!("../corpus/flat.cartan")),
    ("exp-scaled", include_str!("../corpus/exp-scaled.cartan")),
    (
        "surfaces-of-revolution",
        include_str!("../corpus/surfaces-of-revolution.cartan"),
    ),
    (
        "constant-curvature-sphere",
        include_str!("../corpus/constant-curvature-sphere.cartan"),
    ),
    (
        "constant-curvature-plane",
        include_str!("../corpus/constant-curvature-plane.cartan"),
    ),
    (
        "constant-curvature-hyperbolic",
        include_str!("../corpus/constant-curvature-hyperbolic.cartan"),
    ),
    (
        "affinely-curved",
        include_str!("../corpus/affinely-curved.cartan"),
    ),
    (
        "punctured-plane-monodromy",
        include_str!("../corpus/punctured-plane-monodromy.cartan"),
    ),
    ("so3", include_str!("../corpus/so3.cartan")),
    (
        "nonunimodular-2d",
        include_str!("../corpus/nonunimodular-2d.cartan"),
    ),
];

pub fn example(name: &str) -> Option<&'static str> {
    EXAMPLES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    EXAMPLES.iter().map(|(n, _)| *n)
}
