use proptest::prelude::*;

use pmelab::expr::{fd_derivative, parse, BinOp, Constant, Env, Expr, Func, Var};
use pmelab::grid::{divergence, face_divergence, face_gradient, gradient, laplacian, negative_part, Field, Grid};
use pmelab::model::{density_from_pressure, pressure_from_density};

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-50.0..50.0f64).prop_map(Expr::Num),
        (0u32..20).prop_map(|k| Expr::Num(k as f64)),
        prop::sample::select(vec![Var::X, Var::Y, Var::T, Var::P, Var::R]).prop_map(Expr::Var),
        prop::sample::select(vec![Constant::Pi, Constant::E]).prop_map(Expr::Const),
    ]
}

fn tree() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 3, |inner| {
        let ops = vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow];
        let unary = vec![Func::Sin, Func::Cos, Func::Tanh, Func::Cosh, Func::Exp, Func::Log, Func::Sqrt, Func::Abs];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (prop::sample::select(ops), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
            (prop::sample::select(unary), inner.clone()).prop_map(|(f, a)| Expr::Call(f, vec![a])),
            (prop::sample::select(vec![Func::Min, Func::Max]), inner.clone(), inner)
                .prop_map(|(f, a, b)| Expr::Call(f, vec![a, b])),
        ]
    })
}

fn field_strategy() -> impl Strategy<Value = Field> {
    (1usize..=2, 8usize..=20).prop_flat_map(|(dim, n)| {
        let len = if dim == 1 { n } else { n * n };
        prop::collection::vec(-10.0..10.0f64, len)
            .prop_map(move |data| Field::from_vec(Grid::new(dim, n, 1.5).unwrap(), data))
    })
}

fn field_pair() -> impl Strategy<Value = (Field, Field)> {
    field_strategy().prop_flat_map(|f| {
        let g = *f.grid();
        (Just(f), prop::collection::vec(-10.0..10.0f64, g.len()).prop_map(move |d| Field::from_vec(g, d)))
    })
}

fn same_value(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan()) || ((a - b).abs() <= 1e-12 * a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printing_then_parsing_is_idempotent(e in tree()) {
        let printed = e.to_string();
        let reparsed = parse(&printed).unwrap();
        prop_assert_eq!(reparsed.to_string(), printed.clone());
        let env = Env::point(0.3, Some(-0.7), 0.45).with_p(0.2);
        match (e.evaluate(&env), reparsed.evaluate(&env)) {
            (Ok(a), Ok(b)) => prop_assert!(same_value(a, b), "{} vs {} for {}", a, b, printed),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?} for {}", a, b, printed),
        }
    }

    #[test]
    fn finite_differences_are_exact_on_cubics(
        c in prop::array::uniform4(-3.0..3.0f64),
        x in -2.0..2.0f64,
    ) {
        let src = format!("{:?} + {:?}*x + {:?}*x^2 + {:?}*x^3", c[0], c[1], c[2], c[3]);
        let e = parse(&src).unwrap();
        let env = Env::new().with_x(x);
        let d1 = c[1] + 2.0 * c[2] * x + 3.0 * c[3] * x * x;
        let d2 = 2.0 * c[2] + 6.0 * c[3] * x;
        let scale = 1.0 + c.iter().map(|v| v.abs()).sum::<f64>() * 8.0;
        prop_assert!((fd_derivative(&e, &env, Var::X, 1, None).unwrap() - d1).abs() <= 1e-8 * scale);
        prop_assert!((fd_derivative(&e, &env, Var::X, 2, None).unwrap() - d2).abs() <= 1e-4 * scale);
    }

    #[test]
    fn constitutive_law_round_trips(v in 1e-3..1.5f64, b in 0.5..2.0f64, m in 2.0..100.0f64) {
        let u = v * b;
        let p = pressure_from_density(u, b, m);
        let back = density_from_pressure(p, b, m);
        prop_assert!((back - u).abs() <= 1e-12 * u, "u={} back={} m={}", u, back, m);
        let q = density_from_pressure(p, b, m);
        prop_assert!((pressure_from_density(q, b, m) - p).abs() <= 1e-12 * p.max(1e-300));
    }

    #[test]
    fn negative_part_algebra(f in field_strategy(), c in 0.0..5.0f64) {
        let neg = negative_part(&f);
        let pos = f.map(|v| v.max(0.0));
        for ((&v, &n), &p) in f.values().iter().zip(neg.values()).zip(pos.values()) {
            prop_assert!(n >= 0.0);
            prop_assert_eq!(p - n, v);
            prop_assert_eq!(p * n, 0.0);
        }
        let scaled = negative_part(&f.map(|v| c * v));
        for (&s, &n) in scaled.values().iter().zip(neg.values()) {
            prop_assert!((s - c * n).abs() <= 1e-12 * (1.0 + c * n));
        }
    }

    #[test]
    fn laplacian_is_divergence_of_face_gradient(f in field_strategy()) {
        let lap = laplacian(&f);
        let composed = face_divergence(f.grid(), &face_gradient(&f));
        let scale = 1.0 + lap.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in lap.values().iter().zip(composed.values()) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn summation_by_parts_on_faces((f, g) in field_pair()) {
        let grid = *f.grid();
        let vol = grid.cell_volume();
        let lhs: f64 = f.values().iter().zip(laplacian(&g).values()).map(|(a, b)| a * b).sum::<f64>() * vol;
        let (df, dg) = (face_gradient(&f), face_gradient(&g));
        let rhs: f64 = -df.iter().zip(&dg)
            .map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>())
            .sum::<f64>() * vol;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs().max(rhs.abs())), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn summation_by_parts_cell_centred((f, g) in field_pair()) {
        // The centred pair sums by parts exactly when both fields vanish near the edge.
        let grid = *f.grid();
        let inner = |h: &Field| {
            let mut h = h.clone();
            for k in 0..grid.len() {
                if grid.cells_to_edge(k) < 3 {
                    h.values_mut()[k] = 0.0;
                }
            }
            h
        };
        let (f, g) = (inner(&f), inner(&g));
        let vol = grid.cell_volume();
        let gg = gradient(&g);
        let lhs: f64 = f.values().iter().zip(divergence(&gg).values()).map(|(a, b)| a * b).sum::<f64>() * vol;
        let rhs: f64 = -gradient(&f).dot(&gg).values().iter().sum::<f64>() * vol;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs().max(rhs.abs())), "{} vs {}", lhs, rhs);
    }
}
