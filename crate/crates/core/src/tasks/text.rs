//! String and grid manipulation tasks.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    check_range, exact_match, instance, task_rng, AnswerKind, Difficulty, Task, TaskError, TaskInstance, TaskRng,
    Verdict,
};

fn truth_answer(instance: &TaskInstance) -> Option<String> {
    instance
        .ground_truth
        .get("answer")
        .and_then(|v| v.as_str())
        .map(String::from)
}

macro_rules! exact_task_common {
    ($kind:expr) => {
        fn answer_kind(&self) -> AnswerKind {
            $kind
        }

        fn verify(&self, instance: &TaskInstance, answer: &str) -> Verdict {
            match truth_answer(instance) {
                Some(expected) => exact_match(answer, &expected, $kind),
                None => Verdict::incorrect("malformed ground truth: missing answer"),
            }
        }

        fn reference_answer(&self, instance: &TaskInstance) -> Option<String> {
            truth_answer(instance)
        }
    };
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LettersKnobs {
    min_length: usize,
    max_length: usize,
    min_alphabet: usize,
    max_alphabet: usize,
}

impl Default for LettersKnobs {
    fn default() -> Self {
        Self {
            min_length: 8,
            max_length: 16,
            min_alphabet: 5,
            max_alphabet: 8,
        }
    }
}

/// Count a letter in a string and list where it occurs.
#[derive(Debug, Default)]
pub struct Letters;

/// Count followed by the 1-indexed positions of `letter` in `word`.
pub(crate) fn letter_positions(word: &str, letter: char) -> Vec<usize> {
    word.chars()
        .enumerate()
        .filter(|&(_, c)| c == letter)
        .map(|(i, _)| i + 1)
        .collect()
}

impl Task for Letters {
    fn name(&self) -> &str {
        "letters"
    }

    exact_task_common!(AnswerKind::IntegerList);

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (LettersKnobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "length", k.min_length, k.max_length, 1, 200)?;
        check_range(self.name(), "alphabet", k.min_alphabet, k.max_alphabet, 1, 26)?;
        let mut rng = task_rng(seed);
        let mut alphabet: Vec<char> = ('a'..='z').collect();
        alphabet.shuffle(&mut rng);
        alphabet.truncate(rng.gen_range(k.min_alphabet..=k.max_alphabet));
        let len = rng.gen_range(k.min_length..=k.max_length);
        let word: String = (0..len).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
        let letter = *alphabet.choose(&mut rng).unwrap();
        let positions = letter_positions(&word, letter);
        let answer = std::iter::once(positions.len())
            .chain(positions.iter().copied())
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let question = format!(
            "How many times does the letter \"{letter}\" appear in the string \"{word}\", and at \
             which positions? Positions start at 1. Answer with the count followed by the list of \
             positions, in the form 2, [3, 7]. If the letter does not appear, answer 0, []."
        );
        Ok(instance(
            self.name(),
            seed,
            resolved,
            question,
            json!({ "word": word, "letter": letter.to_string(), "answer": answer }),
        ))
    }
}

// ---------------------------------------------------------------------------

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br", "cl", "dr", "fl",
    "gr", "pl", "qu", "sh", "st", "th", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "io", "ou"];
const CODAS: &[&str] = &["", "", "", "n", "r", "s", "t", "l", "m", "ck", "nd", "st"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SpellKnobs {
    min_length: usize,
    max_length: usize,
}

impl Default for SpellKnobs {
    fn default() -> Self {
        Self {
            min_length: 4,
            max_length: 12,
        }
    }
}

/// Reverse a pronounceable made-up word.
#[derive(Debug, Default)]
pub struct SpellBackward;

fn pseudo_word(len: usize, rng: &mut TaskRng) -> String {
    let mut w = String::new();
    while w.len() < len {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
        w.push_str(CODAS.choose(rng).unwrap());
    }
    w.truncate(len);
    w
}

impl Task for SpellBackward {
    fn name(&self) -> &str {
        "spell_backward"
    }

    exact_task_common!(AnswerKind::String { fold_case: true });

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (SpellKnobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "length", k.min_length, k.max_length, 2, 100)?;
        let mut rng = task_rng(seed);
        let len = rng.gen_range(k.min_length..=k.max_length);
        let word = pseudo_word(len, &mut rng);
        let reversed: String = word.chars().rev().collect();
        let question = format!("Spell the word \"{word}\" backward. Answer with the reversed word only.");
        Ok(instance(
            self.name(),
            seed,
            resolved,
            question,
            json!({ "word": word, "answer": reversed }),
        ))
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RotationKnobs {
    min_rows: usize,
    max_rows: usize,
    min_cols: usize,
    max_cols: usize,
}

impl Default for RotationKnobs {
    fn default() -> Self {
        Self {
            min_rows: 2,
            max_rows: 5,
            min_cols: 2,
            max_cols: 5,
        }
    }
}

/// Rotate a matrix clockwise by a multiple of 90 degrees.
#[derive(Debug, Default)]
pub struct MatrixRotation;

/// One clockwise quarter turn.
pub(crate) fn rotate_cw<T: Clone>(m: &[Vec<T>]) -> Vec<Vec<T>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    (0..cols)
        .map(|r| (0..rows).map(|c| m[rows - 1 - c][r].clone()).collect())
        .collect()
}

fn render_grid(m: &[Vec<char>], cell_sep: &str, row_sep: &str) -> String {
    m.iter()
        .map(|row| row.iter().map(char::to_string).collect::<Vec<_>>().join(cell_sep))
        .collect::<Vec<_>>()
        .join(row_sep)
}

impl Task for MatrixRotation {
    fn name(&self) -> &str {
        "matrix_rotation"
    }

    exact_task_common!(AnswerKind::Grid);

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (RotationKnobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "rows", k.min_rows, k.max_rows, 1, 20)?;
        check_range(self.name(), "cols", k.min_cols, k.max_cols, 1, 20)?;
        let mut rng = task_rng(seed);
        let alphabet: Vec<char> = ('a'..='z').chain('0'..='9').collect();
        let rows = rng.gen_range(k.min_rows..=k.max_rows);
        let cols = rng.gen_range(k.min_cols..=k.max_cols);
        let matrix: Vec<Vec<char>> = (0..rows)
            .map(|_| (0..cols).map(|_| *alphabet.choose(&mut rng).unwrap()).collect())
            .collect();
        let turns = rng.gen_range(1..=3);
        let mut rotated = matrix.clone();
        for _ in 0..turns {
            rotated = rotate_cw(&rotated);
        }
        let question = format!(
            "Rotate the matrix below {} degrees clockwise.\n\n{}\n\n\
             Answer with the rotated matrix, one row per line, with cells separated by spaces.",
            turns * 90,
            render_grid(&matrix, " ", "\n")
        );
        Ok(instance(
            self.name(),
            seed,
            resolved,
            question,
            json!({
                "matrix": render_grid(&matrix, ",", ";"),
                "degrees": turns * 90,
                "answer": render_grid(&rotated, ",", ";"),
            }),
        ))
    }
}

// ---------------------------------------------------------------------------

/// Pattern and the character inserted right after it.
pub(crate) const INSERTION_RULES: [(&str, char); 5] = [
    ("ABCD", 'A'),
    ("BCDE", 'B'),
    ("CDEA", 'C'),
    ("DEAB", 'D'),
    ("EABC", 'E'),
];

/// Applies every rule at every match in the original string at once.
pub(crate) fn apply_insertions(s: &str) -> String {
    let b = s.as_bytes();
    let mut out = String::with_capacity(s.len() * 2);
    for (i, &c) in b.iter().enumerate() {
        out.push(c as char);
        if i >= 3 {
            let window = &s[i - 3..=i];
            if let Some(&(_, ins)) = INSERTION_RULES.iter().find(|(p, _)| *p == window) {
                out.push(ins);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InsertionKnobs {
    min_length: usize,
    max_length: usize,
    min_patterns: usize,
    max_patterns: usize,
}

impl Default for InsertionKnobs {
    fn default() -> Self {
        Self {
            min_length: 6,
            max_length: 20,
            min_patterns: 1,
            max_patterns: 3,
        }
    }
}

/// Insert marker characters after fixed four-letter patterns.
#[derive(Debug, Default)]
pub struct StringInsertion;

impl Task for StringInsertion {
    fn name(&self) -> &str {
        "string_insertion"
    }

    exact_task_common!(AnswerKind::String { fold_case: true });

    fn generate(&self, seed: u64, difficulty: &Difficulty) -> Result<TaskInstance, TaskError> {
        let (k, resolved): (InsertionKnobs, _) = difficulty.resolve(self.name())?;
        check_range(self.name(), "length", k.min_length, k.max_length, 4, 200)?;
        check_range(self.name(), "patterns", k.min_patterns, k.max_patterns, 0, 10)?;
        let mut rng = task_rng(seed);
        let len = rng.gen_range(k.min_length..=k.max_length);
        let mut chars: Vec<u8> = (0..len).map(|_| b"ABCDE"[rng.gen_range(0..5)]).collect();
        // Plant patterns so matches are common rather than accidental.
        for _ in 0..rng.gen_range(k.min_patterns..=k.max_patterns) {
            let (pattern, _) = INSERTION_RULES.choose(&mut rng).unwrap();
            let at = rng.gen_range(0..=len - 4);
            chars[at..at + 4].copy_from_slice(pattern.as_bytes());
        }
        let s = String::from_utf8(chars).expect("ascii");
        let rules: Vec<String> = INSERTION_RULES
            .iter()
            .map(|(p, c)| format!("- if {p} appears, insert {c} right after it"))
            .collect();
        let question = format!(
            "Apply the following rules to the string {s}:\n{}\n\
             Find every occurrence of every pattern in the original string, including overlapping \
             ones, and make all insertions at once, so inserted characters never create new \
             matches. Answer with the resulting string only.",
            rules.join("\n")
        );
        Ok(instance(
            self.name(),
            seed,
            resolved,
            question,
            json!({ "input": s, "answer": apply_insertions(&s) }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letter_examples() {
        assert_eq!(letter_positions("strawberry", 'r'), vec![3, 8, 9]);
        assert_eq!(letter_positions("aaa", 'a'), vec![1, 2, 3]);
        assert!(letter_positions("xyz", 'a').is_empty());
    }

    #[test]
    fn letters_accepts_formats() {
        let mut inst = Letters.generate(0, &Difficulty::new()).unwrap();
        inst.ground_truth = json!({ "word": "strawberry", "letter": "r", "answer": "3,3,8,9" });
        assert!(Letters.verify(&inst, "3, [3, 8, 9]").correct);
        assert!(!Letters.verify(&inst, "3, [3, 8, 10]").correct);
        inst.ground_truth = json!({ "word": "xyz", "letter": "a", "answer": "0" });
        assert!(Letters.verify(&inst, "0, []").correct);
    }

    #[test]
    fn rotation_example() {
        let m = vec![vec![1, 2], vec![3, 4]];
        assert_eq!(rotate_cw(&m), vec![vec![3, 1], vec![4, 2]]);
        let r = vec![vec![1, 2, 3]];
        assert_eq!(rotate_cw(&r), vec![vec![1], vec![2], vec![3]]);
        assert_eq!(rotate_cw(&rotate_cw(&rotate_cw(&rotate_cw(&m)))), m);
    }

    #[test]
    fn rotation_verifies_spaced_rows() {
        let mut inst = MatrixRotation.generate(0, &Difficulty::new()).unwrap();
        inst.ground_truth = json!({ "matrix": "1,2;3,4", "degrees": 90, "answer": "3,1;4,2" });
        assert!(MatrixRotation.verify(&inst, "3 1\n4 2").correct);
        assert!(MatrixRotation.verify(&inst, "[[3,1],[4,2]]").correct);
        assert!(!MatrixRotation.verify(&inst, "1 3\n2 4").correct);
    }

    #[test]
    fn insertion_rules() {
        assert_eq!(apply_insertions("ABCDE"), "ABCDAEB");
        assert_eq!(apply_insertions("AAAA"), "AAAA");
        assert_eq!(apply_insertions("EABCD"), "EABCEDA");
    }

    #[test]
    fn spell_backward_folds_case() {
        let inst = SpellBackward.generate(5, &Difficulty::new()).unwrap();
        let word = inst.ground_truth["word"].as_str().unwrap().to_string();
        let rev: String = word.chars().rev().collect();
        assert!(SpellBackward.verify(&inst, &rev.to_uppercase()).correct);
        assert!(!SpellBackward.verify(&inst, &word).correct || word == rev);
        assert!((4..=12).contains(&word.len()));
    }
}
