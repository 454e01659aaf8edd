//! Interpreter-based equivalence oracle for program rewrites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ast::{FunctionDef, SourceUnit, Type};
use super::interp::{interpret, RunOutcome, RuntimeFault, Value};

/// A function/argument vector on which two programs behaved differently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub function: String,
    pub args: Vec<Value>,
    pub original: RunOutcome,
    pub transformed: RunOutcome,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let args: Vec<String> = self.args.iter().map(|a| a.to_string()).collect();
        write!(
            f,
            "{}({}): original {:?} vs transformed {:?}",
            self.function,
            args.join(", "),
            self.original.result,
            self.transformed.result
        )
    }
}

/// Draws an argument vector matching the function signature. Integers are kept
/// small so loops driven by arguments stay short and zero divisors show up often.
pub fn random_args(func: &FunctionDef, rng: &mut impl Rng) -> Vec<Value> {
    func.params
        .iter()
        .map(|p| match p.ty {
            Type::Int => Value::Int(rng.gen_range(-8..=16)),
            Type::Bool => Value::Bool(rng.gen_bool(0.5)),
        })
        .collect()
}

/// Runs both programs on one argument vector. The transformed program gets at least
/// twice the steps the original used (and never less than `fuel`) before its fuel
/// exhaustion counts as a divergence.
pub fn compare_on(
    original: &SourceUnit,
    transformed: &SourceUnit,
    function: &str,
    args: &[Value],
    fuel: u64,
) -> Option<Divergence> {
    let a = interpret(original, function, args, fuel);
    let budget = a.steps_used.saturating_mul(2).max(fuel);
    let b = interpret(transformed, function, args, budget);
    let same = match (&a.result, &b.result) {
        (Ok(x), Ok(y)) => x == y,
        (Err(RuntimeFault::FuelExhausted), Err(RuntimeFault::FuelExhausted)) => true,
        (Err(x), Err(y)) => x == y,
        _ => false,
    };
    (!same).then(|| Divergence {
        function: function.to_string(),
        args: args.to_vec(),
        original: a,
        transformed: b,
    })
}

/// Checks every function of `original` against `transformed` on `vectors` seeded
/// random argument vectors each.
pub fn check_equivalent(
    original: &SourceUnit,
    transformed: &SourceUnit,
    vectors: usize,
    seed: u64,
    fuel: u64,
) -> Result<(), Divergence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for func in &original.functions {
        for _ in 0..vectors {
            let args = random_args(func, &mut rng);
            if let Some(d) = compare_on(original, transformed, &func.name, &args, fuel) {
                return Err(d);
            }
        }
    }
    Ok(())
}
