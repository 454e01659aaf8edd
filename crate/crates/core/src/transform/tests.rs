use super::*;
use crate::minic::{check_equivalent, gen, parse, print_source, resolve_scopes, DEFAULT_FUEL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ALL_OPS: &str = include_str!("../../tests/fixtures/all_ops.mc");
const LOOPS: &str = include_str!("../../tests/fixtures/loops.mc");
const SWITCH_RETURN: &str = include_str!("../../tests/fixtures/switch_return.mc");
const RETURN_ONLY: &str = include_str!("../../tests/fixtures/return_only.mc");

fn unit(src: &str) -> SourceUnit {
    parse(src).unwrap()
}

fn apply_first(src: &str, op: OperatorId) -> String {
    let u = unit(src);
    let site = applicable_sites(&u, op)[0].clone();
    print_source(&apply_op(&u, op, &site, 0).applied().unwrap())
}

#[test]
fn operator_numbers_round_trip() {
    for (i, op) in OperatorId::ALL.into_iter().enumerate() {
        assert_eq!(op.number() as usize, i + 1);
        assert_eq!(OperatorId::from_number(op.number()), Some(op));
        assert_eq!(op.name().parse::<OperatorId>().unwrap(), op);
    }
    assert_eq!(OperatorId::from_number(0), None);
    assert_eq!(OperatorId::from_number(16), None);
    assert_eq!("13".parse::<OperatorId>().unwrap(), OperatorId::SwitchToIfChain);
}

#[test]
fn site_counts() {
    let two_fors = unit(
        "int f(int n) { int s = 0; for (int i = 0; i < n; i++) { s += i; } \
         for (int j = 0; j < 2; j++) { s += j; } return s; }",
    );
    assert_eq!(applicable_sites(&two_fors, OperatorId::ForToWhile).len(), 2);
    let pair = unit("int f() { int a = 1; int b = 2; return a + b; }");
    let swaps = applicable_sites(&pair, OperatorId::IndependentStmtSwap);
    assert_eq!(swaps.len(), 1);
    assert_eq!(applicable_sites(&two_fors, OperatorId::SwitchToIfChain), vec![]);
}

#[test]
fn sites_are_sorted_by_node() {
    let u = unit(ALL_OPS);
    for op in OperatorId::ALL {
        let ids: Vec<_> = applicable_sites(&u, op).iter().map(|s| s.node_id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted, "{op}");
    }
}

#[test]
fn fixture_covers_every_operator() {
    let index = SiteIndex::build(&unit(ALL_OPS));
    assert_eq!(index.applicable_ops(), OperatorId::ALL.to_vec());
}

#[test]
fn compound_assign_expands() {
    let out = apply_first("int f(int x, int y) { x += y; return x; }", OperatorId::CompoundAssignExpand);
    assert!(out.contains("    x = x + y;\n"), "{out}");
    let out = apply_first("int f(int x, int y) { x -= y - 1; return x; }", OperatorId::CompoundAssignExpand);
    assert!(out.contains("    x = x - (y - 1);\n"), "{out}");
}

#[test]
fn branch_swap_negates() {
    let out = apply_first(
        "int f(int a, int b) { int r = 0; if (a < b) { r = 1; } else { r = 2; } return r; }",
        OperatorId::IfBranchSwap,
    );
    let expected = "    if (!(a < b)) {\n        r = 2;\n    } else {\n        r = 1;\n    }\n";
    assert!(out.contains(expected), "{out}");
    let out = apply_first("int f(bool c) { if (c) { return 1; } return 0; }", OperatorId::IfBranchSwap);
    assert!(out.contains("if (!c) {\n    } else {\n        return 1;\n    }"), "{out}");
}

#[test]
fn dead_store_preserves_outputs() {
    let u = unit(ALL_OPS);
    let sites = applicable_sites(&u, OperatorId::DeadStoreInsert);
    let site = &sites[sites.len() / 2];
    let out = apply_op(&u, OperatorId::DeadStoreInsert, site, 7).applied().unwrap();
    assert!(print_source(&out).contains("int _ds_7 = 0;"));
    check_equivalent(&u, &out, 20, 3, DEFAULT_FUEL).unwrap();
}

#[test]
fn dead_store_avoids_taken_names() {
    let out = apply_first("int f() { int _ds_0 = 1; return _ds_0; }", OperatorId::DeadStoreInsert);
    assert!(out.contains("int _ds_1 = 0;"), "{out}");
}

#[test]
fn for_to_while_shapes() {
    let out = apply_first(
        "int f() { int s = 0; for (int i = 0; i < 3; i++) { s += i; } return s; }",
        OperatorId::ForToWhile,
    );
    let expected = "    {\n        int i = 0;\n        while (i < 3) {\n            s += i;\n            i++;\n        }\n    }\n";
    assert!(out.contains(expected), "{out}");
    let out = apply_first("int f() { for (;;) { return 1; } }", OperatorId::ForToWhile);
    assert!(out.contains("while (true) {"), "{out}");
}

#[test]
fn for_with_continue_is_excluded() {
    let u = unit("int f() { int s = 0; for (int i = 0; i < 3; i++) { if (i == 1) { continue; } s += i; } return s; }");
    assert!(applicable_sites(&u, OperatorId::ForToWhile).is_empty());
    // a continue owned by an inner loop does not count
    let u = unit("int f() { int s = 0; for (int i = 0; i < 3; i++) { while (s < 2) { s++; continue; } } return s; }");
    assert_eq!(applicable_sites(&u, OperatorId::ForToWhile).len(), 1);
}

#[test]
fn for_body_declarations_stay_scoped() {
    let src = "int f() { int s = 0; for (int i = 0; i < 3; i++) { int i = 5; s += i; } return s; }";
    let u = unit(src);
    let out = apply_op(&u, OperatorId::ForToWhile, &applicable_sites(&u, OperatorId::ForToWhile)[0], 0)
        .applied()
        .unwrap();
    resolve_scopes(&out).unwrap();
    check_equivalent(&u, &out, 3, 0, DEFAULT_FUEL).unwrap();
}

#[test]
fn switch_to_if_chain() {
    let out = apply_first(SWITCH_RETURN, OperatorId::SwitchToIfChain);
    let expected = "    if (c == -1) {\n        return 0;\n    } else if (c == 2) {\n        c = c * 3;\n    } else {\n        c += 1;\n    }\n";
    assert!(out.contains(expected), "{out}");
}

#[test]
fn fallthrough_switch_is_excluded() {
    let u = unit("int f(int c) { switch (c) { case 1: c = 2; case 2: c = 3; break; } return c; }");
    assert!(applicable_sites(&u, OperatorId::SwitchToIfChain).is_empty());
    let u = unit("int f(int c) { switch (c) { default: break; } return c; }");
    assert!(applicable_sites(&u, OperatorId::SwitchToIfChain).is_empty());
}

#[test]
fn ternary_to_if() {
    let out = apply_first("int f(bool c, int a) { int x = 0; x = c ? a : 1; return x; }", OperatorId::TernaryToIf);
    assert!(out.contains("    if (c) {\n        x = a;\n    } else {\n        x = 1;\n    }\n"), "{out}");
}

#[test]
fn expression_rewrites() {
    assert!(apply_first("bool f(int a, int b) { return a <= b + 1; }", OperatorId::RelationalMirror)
        .contains("return b + 1 >= a;"));
    assert!(apply_first("int f(int a, int b) { return a - b + 2; }", OperatorId::CommutativeSwap)
        .contains("return 2 + (a - b);"));
    assert!(apply_first("int f(int a) { return a * 2; }", OperatorId::ParenWrap).contains("return (a * 2);"));
    assert!(apply_first("int f(bool c) { while (c) { return 1; } return 0; }", OperatorId::BoolCondNormalize)
        .contains("while (c == true) {"));
    assert!(apply_first("int f(int a) { int b = 1, c = a; return b + c; }", OperatorId::DeclSplit)
        .contains("    int b = 1;\n    int c = a;\n"));
    assert!(apply_first("int f(int a) { a--; return a; }", OperatorId::IncDecExpand).contains("a = a - 1;"));
    assert!(apply_first("int f(int a) { while (a > 0) { a--; } return a; }", OperatorId::WhileToFor)
        .contains("for (; a > 0;) {"));
}

#[test]
fn identical_operands_are_not_commuted() {
    let u = unit("int f(int a) { return a + a; }");
    assert!(applicable_sites(&u, OperatorId::CommutativeSwap).is_empty());
    let u = unit("int f(int a) { return a * helper(a); } int helper(int z) { return z; }");
    assert!(applicable_sites(&u, OperatorId::CommutativeSwap).is_empty());
}

#[test]
fn rename_avoids_capture() {
    let u = unit("int f(int a) { int b = a + 1; { int a = 2; b += a; } return a + b; }");
    let sites = applicable_sites(&u, OperatorId::VarRename);
    assert_eq!(sites.len(), 3);
    for (k, site) in sites.iter().enumerate() {
        let out = apply_op(&u, OperatorId::VarRename, site, k as u64).applied().unwrap();
        let text = print_source(&out);
        assert!(text.contains("v_"), "{text}");
        check_equivalent(&u, &out, 20, 1, DEFAULT_FUEL).unwrap();
    }
}

#[test]
fn dependent_statements_are_not_swapped() {
    let u = unit("int f() { int a = 1; int b = a; return b; }");
    assert!(applicable_sites(&u, OperatorId::IndependentStmtSwap).is_empty());
    let u = unit("int f(int a) { a = 1; a = 2; return a; }");
    assert!(applicable_sites(&u, OperatorId::IndependentStmtSwap).is_empty());
}

#[test]
fn wrong_site_is_inapplicable() {
    let u = unit(ALL_OPS);
    for op in OperatorId::ALL {
        let valid: Vec<_> = applicable_sites(&u, op).iter().map(|s| s.node_id).collect();
        let bad = (0..2000).find(|id| !valid.contains(id)).unwrap();
        assert!(!apply_op(&u, op, &Site::at(bad), 0).is_applied(), "{op} at {bad}");
    }
}

/// Every operator at every site of every fixture: applies, changes the text, still
/// resolves and agrees with the interpreter on 20 argument vectors per function.
#[test]
fn soundness_on_fixtures() {
    for src in [ALL_OPS, LOOPS, SWITCH_RETURN, RETURN_ONLY] {
        let u = unit(src);
        let before = print_source(&u);
        for op in OperatorId::ALL {
            for (k, site) in applicable_sites(&u, op).iter().enumerate() {
                let out = match apply_op(&u, op, site, k as u64) {
                    TransformOutcome::Applied { unit, .. } => unit,
                    TransformOutcome::Inapplicable(why) => panic!("{op} at {}: {why}", site.node_id),
                };
                let after = print_source(&out);
                assert_ne!(before, after, "{op} at {}", site.node_id);
                assert_eq!(parse(&after).unwrap(), out, "{op} output does not reparse identically");
                resolve_scopes(&out).unwrap();
                if let Err(d) = check_equivalent(&u, &out, 20, k as u64, DEFAULT_FUEL) {
                    panic!("{op} at {}: {d}\n{after}", site.node_id);
                }
            }
        }
    }
}

#[test]
fn soundness_on_generated_programs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..60 {
        let u = gen::random_unit(&mut rng, &gen::GenConfig::default());
        let index = SiteIndex::build(&u);
        for op in OperatorId::ALL {
            for site in index.sites(op) {
                let out = apply_op(&u, op, site, 5).applied().unwrap();
                assert_ne!(print_source(&u), print_source(&out));
                resolve_scopes(&out).unwrap();
                if let Err(d) = check_equivalent(&u, &out, 20, 9, DEFAULT_FUEL) {
                    panic!("{op}: {d}\n{}\n=>\n{}", print_source(&u), print_source(&out));
                }
            }
        }
    }
}

#[test]
fn empty_genome_is_identity() {
    let u = unit(ALL_OPS);
    assert_eq!(apply_genome(&u, &TransformGenome::default()), (u.clone(), 0));
}

#[test]
fn second_for_edit_finds_nothing() {
    let u = unit("int f() { int s = 0; for (int i = 0; i < 3; i++) { s += i; } return s; }");
    let edit = Edit {
        op: OperatorId::ForToWhile,
        rank: 0,
        seed: 0,
    };
    let (out, n) = apply_genome(&u, &TransformGenome::new(vec![edit, edit]));
    assert_eq!(n, 1);
    assert_ne!(out, u);
}

#[test]
fn out_of_range_rank_is_skipped() {
    let u = unit(LOOPS);
    let g = TransformGenome::new(vec![Edit {
        op: OperatorId::ForToWhile,
        rank: 9,
        seed: 0,
    }]);
    assert_eq!(apply_genome_traced(&u, &g), (u.clone(), vec![false]));
}

#[test]
fn random_genome_is_deterministic() {
    let u = unit(ALL_OPS);
    let a = random_genome(&u, DEFAULT_MAX_GENOME_LEN, 42);
    assert_eq!(a, random_genome(&u, DEFAULT_MAX_GENOME_LEN, 42));
    assert_eq!(a.len(), DEFAULT_MAX_GENOME_LEN);
    assert_ne!(a, random_genome(&u, DEFAULT_MAX_GENOME_LEN, 43));
    // every drawn edit applies, since each was drawn against the evolving tree
    assert!(apply_genome_traced(&u, &a).1.iter().all(|&x| x));
}

#[test]
fn restricted_genome_uses_only_allowed_ops() {
    let u = unit(RETURN_ONLY);
    let g = random_genome_with(&u, 5, 3, &[OperatorId::ParenWrap]);
    assert_eq!(g.len(), 5);
    assert!(g.edits.iter().all(|e| e.op == OperatorId::ParenWrap));
    assert!(random_genome_with(&u, 5, 3, &[OperatorId::SwitchToIfChain]).is_empty());
}

#[test]
fn genome_sweep_preserves_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..300u64 {
        let u = gen::random_unit(&mut rng, &gen::GenConfig::default());
        let g = random_genome(&u, 1 + (i as usize % DEFAULT_MAX_GENOME_LEN), i);
        let (out, n) = apply_genome(&u, &g);
        assert_eq!(n == 0, out == u);
        resolve_scopes(&out).unwrap();
        if let Err(d) = check_equivalent(&u, &out, 20, i, DEFAULT_FUEL) {
            panic!("genome {g}: {d}\n{}\n=>\n{}", print_source(&u), print_source(&out));
        }
    }
}

/// Upper 1% points of the chi-squared distribution, df = 1..=14.
const CHI2_99: [f64; 14] = [
    6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475, 20.090, 21.666, 23.209, 24.725,
    26.217, 27.688, 29.141,
];

#[test]
fn first_edit_is_uniform_over_applicable_ops() {
    let u = unit(ALL_OPS);
    let ops = SiteIndex::build(&u).applicable_ops();
    let draws = 10_000u64;
    let mut counts = vec![0u64; ops.len()];
    for seed in 0..draws {
        let g = random_genome(&u, 1, seed);
        let k = ops.iter().position(|&op| op == g.edits[0].op).unwrap();
        counts[k] += 1;
    }
    let expected = draws as f64 / ops.len() as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    assert!(chi2 < CHI2_99[ops.len() - 2], "chi2 {chi2} counts {counts:?}");
}
