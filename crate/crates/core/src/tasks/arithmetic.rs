//! Exact-answer numeric tasks.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::expr::gcd;
use super::{
    check_range, english_list, exact_match, instance, task_rng, AnswerKind, Difficulty, Task, TaskError, TaskInstance,
    Verdict,
};

fn truth_answer(instance: &TaskInstance) -> Option<String> {
    instance
        .ground_truth
        .get("answer")
        .and_then(|v| v.as_str())
        .map(String::from)
}

fn verify_exact(instance: &TaskInstance, answer: &str, kind: AnswerKind) -> Verdict {
    match truth_answer(instance) {
        Some(expected) => exact_match(answer, &expected, kind),
        None => Verdict::incorrect("malformed ground truth: missing answer"),
    }
}

macro_rules! exact_task_common {
    ($kind:expr) => {
        fn answer_kind(&self) -> AnswerKind {
            $kind
        }

        fn verify(&self, instance: &TaskInstance, answer: &str) -> Verdict {
            verify_exact(instance, answer, $kind)
        }

        fn reference_answer(&self, instance: &TaskInstance) -> Option<String> {
            truth_answer(instance)
        }
    };
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GcdKnobs {
    min_count: usize,
    max_count: usize,
    max_factor: u64,
    max_multiplier: u64,
}

impl Default for GcdKnobs {
    fn default() -> Self {
        Self {
            min_count: 2,
            max_count: 3,
            max_factor: 200,
            max_multiplier: 500,
        }
    }
}

/// Greatest common divisor of two or more integers.
#[derive(Debug, Default)]
pub struct Gcd;

impl Task for Gcd {
    fn name(&self) -> &str {
        "gcd"
    }

    exact_task_common!(AnswerKind::Integer);

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (GcdKnobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "count", k.min_count, k.max_count, 2, 10)?;
        check_range(self.name(), "factor", 1, k.max_factor, 1, 1_000_000)?;
        check_range(self.name(), "multiplier", 1, k.max_multiplier, 1, 1_000_000)?;
        let mut rng = task_rng(seed);
        let count = rng.gen_range(k.min_count..=k.max_count);
        let factor = rng.gen_range(1..=k.max_factor);
        let numbers: Vec<u64> = (0..count)
            .map(|_| factor * rng.gen_range(1..=k.max_multiplier))
            .collect();
        let answer = numbers.iter().copied().fold(0, gcd);
        let listed: Vec<String> = numbers.iter().map(u64::to_string).collect();
        let question = format!(
            "Find the greatest common divisor of {}. Answer with a single integer.",
            english_list(&listed)
        );
        Ok(instance(
            self.name(),
            seed,
            resolved,
            question,
            json!({ "numbers": numbers, "answer": answer.to_string() }),
        ))
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CountBitsKnobs {
    min_bits: u32,
    max_bits: u32,
}

impl Default for CountBitsKnobs {
    fn default() -> Self {
        Self {
            min_bits: 16,
            max_bits: 62,
        }
    }
}

/// Population count of a large integer.
#[derive(Debug, Default)]
pub struct CountBits;

impl Task for CountBits {
    fn name(&self) -> &str {
        "count_bits"
    }

    exact_task_common!(AnswerKind::Integer);

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (CountBitsKnobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "bits", k.min_bits, k.max_bits, 1, 63)?;
        let mut rng = task_rng(seed);
        let bits = rng.gen_range(k.min_bits..=k.max_bits);
        let lo = 1u64 << (bits - 1);
        let n = rng.gen_range(lo..=(lo << 1) - 1);
        let question = format!(
            "How many 1 bits are there in the binary representation of the number {n}? \
             Answer with a single integer."
        );
        Ok(instance(
            self.name(),
            seed,
            resolved,
            question,
            json!({ "number": n, "answer": n.count_ones().to_string() }),
        ))
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ChainSumKnobs {
    min_operands: usize,
    max_operands: usize,
    min_digits: u32,
    max_digits: u32,
}

impl Default for ChainSumKnobs {
    fn default() -> Self {
        Self {
            min_operands: 3,
            max_operands: 12,
            min_digits: 1,
            max_digits: 3,
        }
    }
}

/// A flat chain of additions and subtractions.
#[derive(Debug, Default)]
pub struct ChainSum;

impl Task for ChainSum {
    fn name(&self) -> &str {
        "chain_sum"
    }

    exact_task_common!(AnswerKind::Integer);

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (ChainSumKnobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "operands", k.min_operands, k.max_operands, 2, 50)?;
        check_range(self.name(), "digits", k.min_digits, k.max_digits, 1, 12)?;
        let mut rng = task_rng(seed);
        let count = rng.gen_range(k.min_operands..=k.max_operands);
        let term = |rng: &mut super::TaskRng| {
            let d = rng.gen_range(k.min_digits..=k.max_digits);
            let lo = if d == 1 { 0 } else { 10i64.pow(d - 1) };
            rng.gen_range(lo..10i64.pow(d))
        };
        let first = term(&mut rng);
        let mut text = first.to_string();
        let mut total = first;
        for _ in 1..count {
            let v = term(&mut rng);
            if rng.gen_bool(0.5) {
                total += v;
                text.push_str(&format!(" + {v}"));
            } else {
                total -= v;
                text.push_str(&format!(" - {v}"));
            }
        }
        let question = format!("Compute {text}. Answer with a single integer.");
        Ok(instance(
            self.name(),
            seed,
            resolved,
            question,
            json!({ "expression": text, "answer": total.to_string() }),
        ))
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SortingKnobs {
    min_count: usize,
    max_count: usize,
    min_value: i64,
    max_value: i64,
}

impl Default for SortingKnobs {
    fn default() -> Self {
        Self {
            min_count: 3,
            max_count: 10,
            min_value: -999,
            max_value: 999,
        }
    }
}

/// Sort a list of integers ascending or descending.
#[derive(Debug, Default)]
pub struct NumberSorting;

impl Task for NumberSorting {
    fn name(&self) -> &str {
        "number_sorting"
    }

    exact_task_common!(AnswerKind::IntegerList);

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (SortingKnobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "count", k.min_count, k.max_count, 2, 100)?;
        check_range(
            self.name(),
            "value",
            k.min_value,
            k.max_value,
            -1_000_000_000,
            1_000_000_000,
        )?;
        let mut rng = task_rng(seed);
        let count = rng.gen_range(k.min_count..=k.max_count);
        let numbers: Vec<i64> = (0..count).map(|_| rng.gen_range(k.min_value..=k.max_value)).collect();
        let descending = rng.gen_bool(0.5);
        let mut sorted = numbers.clone();
        sorted.sort_unstable();
        if descending {
            sorted.reverse();
        }
        let join = |v: &[i64], sep: &str| v.iter().map(i64::to_string).collect::<Vec<_>>().join(sep);
        let order = if descending { "descending" } else { "ascending" };
        let question = format!(
            "Sort the following numbers in {order} order: {}. \
             Answer with the sorted numbers as a comma-separated list.",
            join(&numbers, ", ")
        );
        Ok(instance(
            self.name(),
            seed,
            resolved,
            question,
            json!({ "numbers": numbers, "order": order, "answer": join(&sorted, ",") }),
        ))
    }
}

// ---------------------------------------------------------------------------

const CATEGORIES: &[(&str, &[(&str, &str)])] = &[
    (
        "fruits",
        &[
            ("apple", "apples"),
            ("banana", "bananas"),
            ("orange", "oranges"),
            ("peach", "peaches"),
            ("plum", "plums"),
            ("grape", "grapes"),
            ("strawberry", "strawberries"),
            ("nectarine", "nectarines"),
            ("raspberry", "raspberries"),
            ("blackberry", "blackberries"),
        ],
    ),
    (
        "vegetables",
        &[
            ("carrot", "carrots"),
            ("potato", "potatoes"),
            ("onion", "onions"),
            ("yam", "yams"),
            ("cabbage", "cabbages"),
            ("stalk of celery", "stalks of celery"),
            ("head of broccoli", "heads of broccoli"),
            ("cucumber", "cucumbers"),
        ],
    ),
    (
        "animals",
        &[
            ("cat", "cats"),
            ("dog", "dogs"),
            ("rabbit", "rabbits"),
            ("goat", "goats"),
            ("cow", "cows"),
            ("pig", "pigs"),
            ("chicken", "chickens"),
            ("duck", "ducks"),
            ("snail", "snails"),
            ("mouse", "mice"),
            ("donkey", "donkeys"),
            ("frog", "frogs"),
        ],
    ),
    (
        "musical instruments",
        &[
            ("piano", "pianos"),
            ("flute", "flutes"),
            ("trumpet", "trumpets"),
            ("violin", "violins"),
            ("drum", "drums"),
            ("clarinet", "clarinets"),
            ("trombone", "trombones"),
            ("accordion", "accordions"),
        ],
    ),
];

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ObjectCountingKnobs {
    min_items: usize,
    max_items: usize,
    max_quantity: usize,
}

impl Default for ObjectCountingKnobs {
    fn default() -> Self {
        Self {
            min_items: 3,
            max_items: 8,
            max_quantity: 4,
        }
    }
}

/// Count how many listed objects belong to a category.
#[derive(Debug, Default)]
pub struct ObjectCounting;

impl Task for ObjectCounting {
    fn name(&self) -> &str {
        "object_counting"
    }

    exact_task_common!(AnswerKind::Integer);

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (ObjectCountingKnobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "items", k.min_items, k.max_items, 1, 20)?;
        check_range(self.name(), "quantity", 1, k.max_quantity, 1, 10)?;
        let mut rng = task_rng(seed);
        let target = rng.gen_range(0..CATEGORIES.len());
        let mut pool: Vec<(usize, usize)> = CATEGORIES
            .iter()
            .enumerate()
            .flat_map(|(c, (_, items))| (0..items.len()).map(move |i| (c, i)))
            .collect();
        pool.shuffle(&mut rng);
        let n_items = rng.gen_range(k.min_items..=k.max_items);
        // Guarantee at least one object from the asked-about category.
        let anchor = pool
            .iter()
            .position(|&(c, _)| c == target)
            .expect("every category has items");
        pool.swap(0, anchor);
        let mut chosen: Vec<(usize, usize)> = pool.into_iter().take(n_items).collect();
        chosen.shuffle(&mut rng);

        let mut total = 0usize;
        let mut phrases = Vec::new();
        for &(c, i) in &chosen {
            let qty = rng.gen_range(1..=k.max_quantity);
            let (singular, plural) = CATEGORIES[c].1[i];
            if c == target {
                total += qty;
            }
            phrases.push(if qty == 1 {
                let article = if singular.starts_with(['a', 'e', 'i', 'o', 'u']) {
                    "an"
                } else {
                    "a"
                };
                format!("{article} {singular}")
            } else {
                format!("{} {plural}", NUMBER_WORDS[qty])
            });
        }
        let category = CATEGORIES[target].0;
        let question = format!(
            "I have {}. How many {category} do I have? Answer with a single integer.",
            english_list(&phrases)
        );
        Ok(instance(
            self.name(),
            seed,
            resolved,
            question,
            json!({ "category": category, "answer": total.to_string() }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(task: &dyn Task, seed: u64) -> TaskInstance {
        task.generate(seed, &Difficulty::new()).unwrap()
    }

    #[test]
    fn gcd_example() {
        let mut inst = gen(&Gcd, 0);
        inst.ground_truth = json!({ "numbers": [48, 18], "answer": "6" });
        assert!(Gcd.verify(&inst, "6").correct);
        assert!(Gcd.verify(&inst, " \"6\" ").correct);
        assert!(!Gcd.verify(&inst, "3").correct);
    }

    #[test]
    fn gcd_matches_trial_division() {
        for seed in 0..200 {
            let inst = gen(&Gcd, seed);
            let nums: Vec<u64> = serde_json::from_value(inst.ground_truth["numbers"].clone()).unwrap();
            let min = *nums.iter().min().unwrap();
            let brute = (1..=min).rev().find(|d| nums.iter().all(|n| n % d == 0)).unwrap();
            assert_eq!(Gcd.reference_answer(&inst).unwrap(), brute.to_string());
        }
    }

    #[test]
    fn count_bits_matches_repeated_division() {
        for seed in 0..200 {
            let inst = gen(&CountBits, seed);
            let mut n = inst.ground_truth["number"].as_u64().unwrap();
            let mut ones = 0;
            while n > 0 {
                ones += n % 2;
                n /= 2;
            }
            assert_eq!(CountBits.reference_answer(&inst).unwrap(), ones.to_string());
        }
    }

    #[test]
    fn count_bits_255() {
        let mut inst = gen(&CountBits, 0);
        inst.ground_truth = json!({ "number": 255, "answer": "8" });
        assert!(CountBits.verify(&inst, "8").correct);
    }

    #[test]
    fn chain_sum_question_evaluates_to_truth() {
        for seed in 0..200 {
            let inst = gen(&ChainSum, seed);
            let text = inst.ground_truth["expression"].as_str().unwrap();
            let mut total = 0i64;
            let mut sign = 1i64;
            for tok in text.split_whitespace() {
                match tok {
                    "+" => sign = 1,
                    "-" => sign = -1,
                    n => total += sign * n.parse::<i64>().unwrap(),
                }
            }
            assert_eq!(ChainSum.reference_answer(&inst).unwrap(), total.to_string());
            assert!(inst.question.contains(text));
        }
    }

    #[test]
    fn sorting_is_a_sorted_permutation() {
        for seed in 0..100 {
            let inst = gen(&NumberSorting, seed);
            let mut nums: Vec<i64> = serde_json::from_value(inst.ground_truth["numbers"].clone()).unwrap();
            let ans: Vec<i64> = inst.ground_truth["answer"]
                .as_str()
                .unwrap()
                .split(',')
                .map(|s| s.parse().unwrap())
                .collect();
            nums.sort();
            let mut sorted_ans = ans.clone();
            sorted_ans.sort();
            assert_eq!(nums, sorted_ans);
            let asc = ans.windows(2).all(|w| w[0] <= w[1]);
            let desc = ans.windows(2).all(|w| w[0] >= w[1]);
            assert!(asc || desc);
        }
    }

    #[test]
    fn object_counting_mentions_category() {
        for seed in 0..100 {
            let inst = gen(&ObjectCounting, seed);
            let cat = inst.ground_truth["category"].as_str().unwrap();
            assert!(inst.question.contains(&format!("How many {cat}")));
            let n: usize = inst.ground_truth["answer"].as_str().unwrap().parse().unwrap();
            assert!(n >= 1);
        }
    }

    #[test]
    fn unknown_knob_rejected() {
        let err = Gcd.generate(0, &Difficulty::new().with("bogus", 1)).unwrap_err();
        assert!(matches!(err, TaskError::InvalidDifficulty { .. }));
        let err = ChainSum.generate(0, &Difficulty::new().with("min_operands", 9).with("max_operands", 3));
        assert!(err.is_err());
    }

    #[test]
    fn resolved_difficulty_regenerates_identically() {
        let inst = ChainSum
            .generate(7, &Difficulty::new().with("max_operands", 4))
            .unwrap();
        assert_eq!(inst.difficulty.0["max_operands"], 4);
        assert_eq!(inst.difficulty.0["min_operands"], 3);
        let again = ChainSum.generate(7, &inst.difficulty).unwrap();
        assert_eq!(inst, again);
    }
}
