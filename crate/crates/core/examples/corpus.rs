//! Decomposes the polynomial test corpus and prints class counts and residuals.

use std::sync::Arc;
use std::time::Instant;

use num_rational::BigRational;
use sosforge::decompose::{decompose, DecomposeConfig};
use sosforge::field::{polynomial_field, FieldRef, SmoothnessClass};
use sosforge::sampling::BoxDomain;
use sosforge::verify::{verify_decomposition, VerifyConfig};

fn poly(n: usize, k: usize, terms: &[(&[usize], i64, i64)]) -> FieldRef {
    let smooth = SmoothnessClass::new(n, k, 1.0).unwrap();
    let t = terms
        .iter()
        .map(|(e, p, q)| (e.to_vec(), BigRational::new((*p).into(), (*q).into())));
    Arc::new(polynomial_field(t, smooth).unwrap())
}

fn main() {
    let only = std::env::args().nth(1);
    let corpus: Vec<(&str, FieldRef, BoxDomain)> = vec![
        (
            "x^2",
            poly(1, 2, &[(&[2], 1, 1)]),
            BoxDomain::cube(1, -10.0, 10.0),
        ),
        (
            "x^4",
            poly(1, 3, &[(&[4], 1, 1)]),
            BoxDomain::cube(1, -2.0, 2.0),
        ),
        (
            "x^2+y^2",
            poly(2, 2, &[(&[2, 0], 1, 1), (&[0, 2], 1, 1)]),
            BoxDomain::cube(2, -5.0, 5.0),
        ),
        (
            "(xy-1)^2",
            poly(2, 2, &[(&[2, 2], 1, 1), (&[1, 1], -2, 1), (&[0, 0], 1, 1)]),
            BoxDomain::cube(2, -2.0, 2.0),
        ),
        (
            "x^2y^2+1",
            poly(2, 2, &[(&[2, 2], 1, 1), (&[0, 0], 1, 1)]),
            BoxDomain::cube(2, -2.0, 2.0),
        ),
        (
            "motzkin+0.1",
            poly(
                2,
                3,
                &[
                    (&[4, 2], 1, 1),
                    (&[2, 4], 1, 1),
                    (&[2, 2], -3, 1),
                    (&[0, 0], 11, 10),
                ],
            ),
            BoxDomain::cube(2, -1.5, 1.5),
        ),
    ];
    for (name, f, b) in corpus {
        if only.as_deref().is_some_and(|o| o != name) {
            continue;
        }
        let t = Instant::now();
        let d = match decompose(f.clone(), &b, &DecomposeConfig::default()) {
            Ok(d) => d,
            Err(e) => {
                println!("{name}: error {e}");
                continue;
            }
        };
        let built = t.elapsed();
        let pts = b.grid(if b.dim() == 1 { 4001 } else { 81 });
        let fmax = pts.iter().map(|x| f.eval(x)).fold(0.0, f64::max);
        let worst = pts
            .iter()
            .filter(|x| d.covered(x))
            .map(|x| (d.sum_of_squares(x) - f.eval(x)).abs())
            .fold(0.0, f64::max);
        println!(
            "{name}: classes {} cubes {} residual {:.3e} rel {:.3e} build {:.2?} total {:.2?}",
            d.class_count(),
            d.diagnostics.cubes,
            worst,
            worst / (1.0 + fmax),
            built,
            t.elapsed()
        );
        println!(
            "  {}",
            serde_json::to_string(&d.diagnostics.depths).unwrap()
        );
        let t = Instant::now();
        let v = verify_decomposition(&d, &VerifyConfig::default());
        println!(
            "  verify {} in {:.2?}",
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed()
        );
        for c in &v.checks {
            println!(
                "    {:<28} {} worst {:.3e} thr {:.3e} fit {:?}",
                c.name, c.pass, c.worst, c.threshold, c.fitted
            );
        }
    }
}
