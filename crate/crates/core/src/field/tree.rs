use std::sync::Arc;

use super::{Backend, Field, FieldRef, SmoothnessClass};
use crate::jet::Jet;

/// Node of an evaluation tree. Derivatives follow the product and chain
/// rules through jets, so a composite of depth `d` costs `d` jet operations.
#[derive(Clone)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Leaf(FieldRef),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sqrt(Box<Expr>),
    Exp(Box<Expr>),
    Recip(Box<Expr>),
    Powf(Box<Expr>, f64),
    /// Outer expression evaluated at the vector of inner expressions.
    Compose(Box<Expr>, Vec<Expr>),
}

impl Expr {
    pub fn jet(&self, n: usize, x: &[f64], order: usize) -> Jet {
        match self {
            Expr::Const(v) => Jet::constant(n, order, *v),
            Expr::Var(i) => Jet::variable(n, order, *i, x[*i]),
            Expr::Leaf(f) => f.jet(x, order),
            Expr::Add(a, b) => a.jet(n, x, order).add(&b.jet(n, x, order)),
            Expr::Mul(a, b) => a.jet(n, x, order).mul(&b.jet(n, x, order)),
            Expr::Neg(a) => a.jet(n, x, order).neg(),
            Expr::Sqrt(a) => a.jet(n, x, order).sqrt(),
            Expr::Exp(a) => a.jet(n, x, order).exp(),
            Expr::Recip(a) => a.jet(n, x, order).recip(),
            Expr::Powf(a, p) => a.jet(n, x, order).powf(*p),
            Expr::Compose(outer, inner) => {
                let ij: Vec<Jet> = inner.iter().map(|e| e.jet(n, x, order)).collect();
                let point: Vec<f64> = ij.iter().map(|j| j.value()).collect();
                outer.jet(inner.len(), &point, order).compose(&ij)
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.jet(x.len(), x, 0).value()
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Leaf(_) => 0,
            Expr::Add(a, b) | Expr::Mul(a, b) => 1 + a.depth().max(b.depth()),
            Expr::Neg(a) | Expr::Sqrt(a) | Expr::Exp(a) | Expr::Recip(a) | Expr::Powf(a, _) => {
                1 + a.depth()
            }
            Expr::Compose(o, i) => {
                1 + o
                    .depth()
                    .max(i.iter().map(|e| e.depth()).max().unwrap_or(0))
            }
        }
    }
}

/// Field backed by an evaluation tree.
#[derive(Clone)]
pub struct ExprField {
    pub expr: Arc<Expr>,
    pub smooth: SmoothnessClass,
}

impl ExprField {
    pub fn new(expr: Expr, smooth: SmoothnessClass) -> Self {
        ExprField {
            expr: Arc::new(expr),
            smooth,
        }
    }
}

impl Field for ExprField {
    fn smoothness(&self) -> SmoothnessClass {
        self.smooth
    }

    fn backend(&self) -> Backend {
        Backend::EvaluationTree
    }

    fn jet(&self, x: &[f64], order: usize) -> Jet {
        self.expr.jet(self.smooth.n, x, order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MultiIndex;

    #[test]
    fn chain_rule_through_sqrt_of_sum() {
        // sqrt(1 + x² y)
        let e = Expr::Sqrt(Box::new(Expr::Add(
            Box::new(Expr::Const(1.0)),
            Box::new(Expr::Mul(
                Box::new(Expr::Mul(Box::new(Expr::Var(0)), Box::new(Expr::Var(0)))),
                Box::new(Expr::Var(1)),
            )),
        )));
        let f = ExprField::new(e, SmoothnessClass::new(2, 3, 1.0).unwrap());
        let (x, y): (f64, f64) = (0.7, 1.3);
        let g = 1.0 + x * x * y;
        let dx = x * y / g.sqrt();
        assert!((f.deriv(&MultiIndex(vec![1, 0]), &[x, y]) - dx).abs() < 1e-14);
        let dy = x * x / (2.0 * g.sqrt());
        assert!((f.deriv(&MultiIndex(vec![0, 1]), &[x, y]) - dy).abs() < 1e-14);
    }

    #[test]
    fn compose_node() {
        // outer(a, b) = a·b at inner (x + y, x − y)
        let outer = Expr::Mul(Box::new(Expr::Var(0)), Box::new(Expr::Var(1)));
        let e = Expr::Compose(
            Box::new(outer),
            vec![
                Expr::Add(Box::new(Expr::Var(0)), Box::new(Expr::Var(1))),
                Expr::Add(
                    Box::new(Expr::Var(0)),
                    Box::new(Expr::Neg(Box::new(Expr::Var(1)))),
                ),
            ],
        );
        let f = ExprField::new(e, SmoothnessClass::new(2, 2, 1.0).unwrap());
        assert_eq!(f.deriv(&MultiIndex(vec![0, 2]), &[0.3, 0.4]), -2.0);
        assert_eq!(f.eval(&[3.0, 1.0]), 8.0);
    }
}
