//! Constructive and search puzzles, verified by checking constraints rather
//! than comparing against a stored answer.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::expr::{check_expression, solve, strip_outer_parens, ExpressionCheck};
use super::{
    check_range, english_list, instance, normalize_answer, task_rng, AnswerKind, Difficulty, Task, TaskError,
    TaskInstance, TaskRng, Verdict,
};

const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Deserialize)]
struct ExpressionTruth {
    numbers: Vec<i64>,
    target: i64,
    witness: String,
}

fn verify_expression(instance: &TaskInstance, answer: &str) -> Verdict {
    let truth: ExpressionTruth = match instance.truth() {
        Ok(t) => t,
        Err(e) => return Verdict::incorrect(e),
    };
    let expr = match normalize_answer(answer, AnswerKind::Expression) {
        Ok(e) => e,
        Err(e) => return Verdict::incorrect(format!("parse: {e}")),
    };
    match check_expression(&expr, &truth.numbers, truth.target) {
        ExpressionCheck::Correct => Verdict::correct(),
        ExpressionCheck::Parse(e) => Verdict::incorrect(format!("parse: {e}")),
        ExpressionCheck::NumbersMismatch { used } => {
            Verdict::incorrect(format!("numbers used {used:?} do not match {:?}", truth.numbers))
        }
        ExpressionCheck::Eval(e) => Verdict::incorrect(format!("evaluation: {e}")),
        ExpressionCheck::WrongValue(v) => Verdict::incorrect(format!("evaluates to {v}, expected {}", truth.target)),
    }
}

fn witness(instance: &TaskInstance) -> Option<String> {
    instance
        .truth::<ExpressionTruth>()
        .ok()
        .map(|t| strip_outer_parens(&t.witness).to_string())
}

fn expression_question(numbers: &[i64], target: i64) -> String {
    let listed: Vec<String> = numbers.iter().map(i64::to_string).collect();
    format!(
        "Using each of the numbers {} exactly once, together with +, -, *, / and parentheses, \
         write an expression that equals {target}. Answer with the expression only, for example (1+2)*3.",
        english_list(&listed)
    )
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Game24Knobs {
    min_value: i64,
    max_value: i64,
}

impl Default for Game24Knobs {
    fn default() -> Self {
        Self {
            min_value: 1,
            max_value: 13,
        }
    }
}

/// Combine four numbers into 24.
#[derive(Debug, Default)]
pub struct Game24;

impl Task for Game24 {
    fn name(&self) -> &str {
        "game24"
    }

    fn answer_kind(&self) -> AnswerKind {
        AnswerKind::Expression
    }

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (Game24Knobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "value", k.min_value, k.max_value, 1, 100)?;
        let mut rng = task_rng(seed);
        for _ in 0..MAX_ATTEMPTS {
            let numbers: Vec<i64> = (0..4).map(|_| rng.gen_range(k.min_value..=k.max_value)).collect();
            if let Some(w) = solve(&numbers, 24) {
                return Ok(instance(
                    self.name(),
                    seed,
                    resolved,
                    expression_question(&numbers, 24),
                    json!({ "numbers": numbers, "target": 24, "witness": w }),
                ));
            }
        }
        Err(TaskError::Generation {
            task: self.name().into(),
            message: "no solvable number set found".into(),
        })
    }

    fn verify(&self, instance: &TaskInstance, answer: &str) -> Verdict {
        verify_expression(instance, answer)
    }

    fn reference_answer(&self, instance: &TaskInstance) -> Option<String> {
        witness(instance)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CountdownKnobs {
    min_count: usize,
    max_count: usize,
    min_value: i64,
    max_value: i64,
    min_target: i64,
    max_target: i64,
}

impl Default for CountdownKnobs {
    fn default() -> Self {
        Self {
            min_count: 4,
            max_count: 6,
            min_value: 1,
            max_value: 100,
            min_target: 10,
            max_target: 1000,
        }
    }
}

/// Reach an arbitrary target from a pool of numbers, using all of them.
#[derive(Debug, Default)]
pub struct Countdown;

/// Folds the pool into one value by random pairwise integer-exact operations.
fn random_combination(numbers: &[i64], rng: &mut TaskRng) -> Option<(i64, String)> {
    let mut items: Vec<(i64, String)> = numbers.iter().map(|&n| (n, n.to_string())).collect();
    while items.len() > 1 {
        let i = rng.gen_range(0..items.len());
        let (a, ea) = items.swap_remove(i);
        let j = rng.gen_range(0..items.len());
        let (b, eb) = items.swap_remove(j);
        let mut options = vec![(a.checked_add(b)?, '+'), (a.checked_mul(b)?, '*')];
        if a > b {
            options.push((a - b, '-'));
        }
        if b != 0 && a % b == 0 {
            options.push((a / b, '/'));
        }
        let &(value, op) = options.choose(rng)?;
        items.push((value, format!("({ea}{op}{eb})")));
    }
    items.pop()
}

impl Task for Countdown {
    fn name(&self) -> &str {
        "countdown"
    }

    fn answer_kind(&self) -> AnswerKind {
        AnswerKind::Expression
    }

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (CountdownKnobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "count", k.min_count, k.max_count, 2, 8)?;
        check_range(self.name(), "value", k.min_value, k.max_value, 1, 10_000)?;
        check_range(self.name(), "target", k.min_target, k.max_target, 1, 1_000_000)?;
        let mut rng = task_rng(seed);
        for _ in 0..MAX_ATTEMPTS {
            let count = rng.gen_range(k.min_count..=k.max_count);
            let numbers: Vec<i64> = (0..count).map(|_| rng.gen_range(k.min_value..=k.max_value)).collect();
            let Some((target, w)) = random_combination(&numbers, &mut rng) else {
                continue;
            };
            if (k.min_target..=k.max_target).contains(&target) {
                return Ok(instance(
                    self.name(),
                    seed,
                    resolved,
                    expression_question(&numbers, target),
                    json!({ "numbers": numbers, "target": target, "witness": w }),
                ));
            }
        }
        Err(TaskError::Generation {
            task: self.name().into(),
            message: "no target inside the requested range".into(),
        })
    }

    fn verify(&self, instance: &TaskInstance, answer: &str) -> Verdict {
        verify_expression(instance, answer)
    }

    fn reference_answer(&self, instance: &TaskInstance) -> Option<String> {
        witness(instance)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct QueensKnobs {
    min_size: usize,
    max_size: usize,
    min_preplaced: usize,
    max_preplaced: usize,
    min_obstacles: usize,
    max_obstacles: usize,
}

impl Default for QueensKnobs {
    fn default() -> Self {
        Self {
            min_size: 6,
            max_size: 10,
            min_preplaced: 1,
            max_preplaced: 3,
            min_obstacles: 2,
            max_obstacles: 6,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct QueensTruth {
    size: usize,
    /// `(row, col)` of queens that are given and must stay.
    preplaced: Vec<(usize, usize)>,
    obstacles: Vec<(usize, usize)>,
    solution: Vec<usize>,
}

/// N-queens on a board with fixed queens and blocked squares.
#[derive(Debug, Default)]
pub struct EightQueens;

fn place_queens(n: usize, rng: &mut TaskRng) -> Option<Vec<usize>> {
    fn go(row: usize, n: usize, cols: &mut Vec<usize>, rng: &mut TaskRng) -> bool {
        if row == n {
            return true;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for c in order {
            let safe = cols
                .iter()
                .enumerate()
                .all(|(r, &qc)| qc != c && row - r != c.abs_diff(qc));
            if safe {
                cols.push(c);
                if go(row + 1, n, cols, rng) {
                    return true;
                }
                cols.pop();
            }
        }
        false
    }
    let mut cols = Vec::with_capacity(n);
    go(0, n, &mut cols, rng).then_some(cols)
}

/// Checks a full placement, one column per row, against the board constraints.
pub(crate) fn queens_violation(
    size: usize,
    preplaced: &[(usize, usize)],
    obstacles: &[(usize, usize)],
    cols: &[usize],
) -> Option<String> {
    if cols.len() != size {
        return Some(format!("expected {size} columns, got {}", cols.len()));
    }
    if let Some(&c) = cols.iter().find(|&&c| c >= size) {
        return Some(format!("column {c} is off the board"));
    }
    for &(r, c) in preplaced {
        if cols[r] != c {
            return Some(format!("pre-placed queen at row {r} column {c} was moved"));
        }
    }
    for &(r, c) in obstacles {
        if cols[r] == c {
            return Some(format!("queen on blocked square at row {r} column {c}"));
        }
    }
    for a in 0..size {
        for b in a + 1..size {
            if cols[a] == cols[b] || b - a == cols[a].abs_diff(cols[b]) {
                return Some(format!("queens in rows {a} and {b} attack each other"));
            }
        }
    }
    None
}

impl Task for EightQueens {
    fn name(&self) -> &str {
        "eight_queens"
    }

    fn answer_kind(&self) -> AnswerKind {
        AnswerKind::IntegerList
    }

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (QueensKnobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "size", k.min_size, k.max_size, 4, 12)?;
        check_range(
            self.name(),
            "preplaced",
            k.min_preplaced,
            k.max_preplaced,
            0,
            k.min_size,
        )?;
        let max_free = k.min_size * (k.min_size - 1);
        check_range(self.name(), "obstacles", k.min_obstacles, k.max_obstacles, 0, max_free)?;
        let mut rng = task_rng(seed);
        let n = rng.gen_range(k.min_size..=k.max_size);
        let solution = place_queens(n, &mut rng).ok_or_else(|| TaskError::Generation {
            task: self.name().into(),
            message: format!("no placement exists for size {n}"),
        })?;

        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        let mut preplaced: Vec<(usize, usize)> = rows[..rng.gen_range(k.min_preplaced..=k.max_preplaced)]
            .iter()
            .map(|&r| (r, solution[r]))
            .collect();
        preplaced.sort_unstable();

        let mut free: Vec<(usize, usize)> = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter(|&(r, c)| solution[r] != c)
            .collect();
        free.shuffle(&mut rng);
        let mut obstacles: Vec<(usize, usize)> = free[..rng.gen_range(k.min_obstacles..=k.max_obstacles)].to_vec();
        obstacles.sort_unstable();

        let queens: HashSet<_> = preplaced.iter().copied().collect();
        let blocked: HashSet<_> = obstacles.iter().copied().collect();
        let board: Vec<String> = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| {
                        if queens.contains(&(r, c)) {
                            "Q"
                        } else if blocked.contains(&(r, c)) {
                            "X"
                        } else {
                            "."
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let question = format!(
            "Place {n} queens on the {n}x{n} board below so that no two queens share a row, \
             column or diagonal. Q is a queen that is already placed and must stay where it is, \
             X is a blocked square that cannot hold a queen, and . is an empty square. \
             Blocked squares do not stop attacks.\n\n{}\n\n\
             Answer with a comma-separated list of {n} numbers giving the 0-based column of the \
             queen in each row, from the top row to the bottom row.",
            board.join("\n")
        );
        let truth = QueensTruth {
            size: n,
            preplaced,
            obstacles,
            solution,
        };
        Ok(instance(
            self.name(),
            seed,
            resolved,
            question,
            serde_json::to_value(truth).expect("truth serializes"),
        ))
    }

    fn verify(&self, instance: &TaskInstance, answer: &str) -> Verdict {
        let truth: QueensTruth = match instance.truth() {
            Ok(t) => t,
            Err(e) => return Verdict::incorrect(e),
        };
        let canonical = match normalize_answer(answer, AnswerKind::IntegerList) {
            Ok(c) => c,
            Err(e) => return Verdict::incorrect(format!("normalize: {e}")),
        };
        let mut cols = Vec::new();
        for item in canonical.split(',').filter(|s| !s.is_empty()) {
            match item.parse::<usize>() {
                Ok(c) => cols.push(c),
                Err(_) => return Verdict::incorrect(format!("column {item} is off the board")),
            }
        }
        match queens_violation(truth.size, &truth.preplaced, &truth.obstacles, &cols) {
            None => Verdict::correct(),
            Some(reason) => Verdict::incorrect(reason),
        }
    }

    fn reference_answer(&self, instance: &TaskInstance) -> Option<String> {
        let truth: QueensTruth = instance.truth().ok()?;
        Some(
            truth
                .solution
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        )
    }
}
