//! The rule-based math domain: "Name one {type} number between {L} and {U}."
//!
//! Membership follows the usual definitions over the positive integers, so
//! 0 belongs to none of the five types.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, DatasetMeta, GENERATOR_VERSION};
use crate::model::{Domain, Question, ANSWER_COUNTS};

/// Upper end of the sampling interval.
pub const MATH_MAX: u64 = 1_000_000;

/// Window draws before a question is declared unsatisfiable.
pub const WINDOW_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumberType {
    Prime,
    Square,
    Cube,
    Fibonacci,
    Triangular,
}

impl NumberType {
    pub const ALL: [NumberType; 5] = [
        NumberType::Prime,
        NumberType::Square,
        NumberType::Cube,
        NumberType::Fibonacci,
        NumberType::Triangular,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NumberType::Prime => "prime",
            NumberType::Square => "square",
            NumberType::Cube => "cube",
            NumberType::Fibonacci => "fibonacci",
            NumberType::Triangular => "triangular",
        }
    }
}

impl fmt::Display for NumberType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NumberType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NumberType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown number type `{s}`"))
    }
}

fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

fn icbrt(n: u64) -> u64 {
    let mut r = (n as f64).cbrt() as u64;
    while r * r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

fn is_square(n: u64) -> bool {
    let r = isqrt(n);
    r * r == n
}

/// Arithmetic membership predicate; [`is_member`] answers from a bitmap
/// built from the member lists and is checked against this.
#[cfg_attr(not(test), allow(dead_code))]
fn satisfies(n: u64, t: NumberType) -> bool {
    if n == 0 {
        return false;
    }
    match t {
        NumberType::Prime => {
            n > 1
                && (2..)
                    .take_while(|d| d * d <= n)
                    .all(|d| !n.is_multiple_of(d))
        }
        NumberType::Square => is_square(n),
        NumberType::Cube => {
            let r = icbrt(n);
            r * r * r == n
        }
        // n is Fibonacci iff 5n²+4 or 5n²−4 is a perfect square.
        NumberType::Fibonacci => is_square(5 * n * n + 4) || is_square(5 * n * n - 4),
        // n = m(m+1)/2 iff 8n+1 is a perfect square.
        NumberType::Triangular => is_square(8 * n + 1),
    }
}

/// Exact membership test on `[0, 10^6]`, in constant time.
pub fn is_member(n: u64, t: NumberType) -> Result<bool, DatasetError> {
    if n > MATH_MAX {
        return Err(DatasetError::OutOfRange(n));
    }
    let bits = bitmap(t);
    Ok(bits[(n / 64) as usize] >> (n % 64) & 1 == 1)
}

fn bitmap(t: NumberType) -> &'static [u64] {
    static CACHE: [OnceLock<Vec<u64>>; 5] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    CACHE[slot(t)].get_or_init(|| {
        let mut bits = vec![0u64; MATH_MAX as usize / 64 + 1];
        for &m in members(t) {
            bits[(m / 64) as usize] |= 1 << (m % 64);
        }
        bits
    })
}

fn slot(t: NumberType) -> usize {
    NumberType::ALL.iter().position(|&x| x == t).unwrap_or(0)
}

fn build_members(t: NumberType) -> Vec<u64> {
    let max = MATH_MAX;
    match t {
        NumberType::Prime => {
            let mut composite = vec![false; max as usize + 1];
            let mut out = Vec::new();
            for i in 2..=max as usize {
                if !composite[i] {
                    out.push(i as u64);
                    let mut j = i * i;
                    while j <= max as usize {
                        composite[j] = true;
                        j += i;
                    }
                }
            }
            out
        }
        NumberType::Square => (1..)
            .map(|k: u64| k * k)
            .take_while(|&v| v <= max)
            .collect(),
        NumberType::Cube => (1..)
            .map(|k: u64| k * k * k)
            .take_while(|&v| v <= max)
            .collect(),
        NumberType::Fibonacci => {
            let mut out = vec![1u64];
            let (mut a, mut b) = (1u64, 2u64);
            while b <= max {
                out.push(b);
                (a, b) = (b, a + b);
            }
            out
        }
        NumberType::Triangular => (1..)
            .map(|k: u64| k * (k + 1) / 2)
            .take_while(|&v| v <= max)
            .collect(),
    }
}

/// All members of `t` in `[0, 10^6]`, ascending and distinct.
pub fn members(t: NumberType) -> &'static [u64] {
    static CACHE: [OnceLock<Vec<u64>>; 5] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    CACHE[slot(t)].get_or_init(|| build_members(t))
}

fn question_id(t: NumberType, lower: u64, upper: u64) -> String {
    format!("math-{t}-{lower}-{upper}")
}

/// The question for the window `[lower, upper]`, whose ground truth is every
/// member of `t` in the window.
pub fn math_question(t: NumberType, lower: u64, upper: u64) -> Result<Question, DatasetError> {
    if upper > MATH_MAX {
        return Err(DatasetError::OutOfRange(upper));
    }
    let all = members(t);
    let start = all.partition_point(|&m| m < lower);
    let end = all.partition_point(|&m| m <= upper);
    let truth: Vec<String> = all[start..end.max(start)]
        .iter()
        .map(u64::to_string)
        .collect();
    Ok(Question::new(
        question_id(t, lower, upper),
        Domain::Math,
        format!("Name one {t} number between {lower} and {upper}."),
        truth,
    )?)
}

/// Samples a window with exactly `k` members of `t`.
///
/// The lower bound is uniform on `[0, 10^6]`. The upper bound grows from the
/// lower bound until it covers `k` members and then stops at a uniformly
/// chosen point before the `(k+1)`-th member, so it is not always a member
/// itself. Lower bounds with fewer than `k` members above them are redrawn.
pub fn make_math_question<R: Rng + ?Sized>(
    t: NumberType,
    k: u32,
    rng: &mut R,
) -> Result<Question, DatasetError> {
    let all = members(t);
    let k = k as usize;
    if k == 0 || all.len() < k {
        return Err(DatasetError::Unsatisfiable {
            number_type: t,
            k: k as u32,
            attempts: 0,
        });
    }
    for _ in 0..WINDOW_ATTEMPTS {
        let lower = rng.random_range(0..=MATH_MAX);
        let start = all.partition_point(|&m| m < lower);
        if start + k > all.len() {
            continue;
        }
        let last = all[start + k - 1];
        let ceiling = all.get(start + k).map_or(MATH_MAX, |&next| next - 1);
        let upper = rng.random_range(last..=ceiling);
        return math_question(t, lower, upper);
    }
    Err(DatasetError::Unsatisfiable {
        number_type: t,
        k: k as u32,
        attempts: WINDOW_ATTEMPTS,
    })
}

/// `per_cell` questions for each answer count, cycling through the five
/// number types. Windows repeated within a run are redrawn.
pub fn generate_math_dataset(per_cell: usize, seed: u64) -> Result<Dataset, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut questions = Vec::with_capacity(per_cell * ANSWER_COUNTS.len());
    for k in ANSWER_COUNTS {
        let mut made = 0;
        let mut misses = 0;
        while made < per_cell {
            let t = NumberType::ALL[made % NumberType::ALL.len()];
            let q = make_math_question(t, k, &mut rng)?;
            if seen.insert(q.id().to_string()) {
                questions.push(q);
                made += 1;
            } else {
                misses += 1;
                if misses > WINDOW_ATTEMPTS {
                    return Err(DatasetError::Unsatisfiable {
                        number_type: t,
                        k,
                        attempts: misses,
                    });
                }
            }
        }
    }
    Dataset::new(
        DatasetMeta {
            name: "math".into(),
            seed,
            generator_version: GENERATOR_VERSION.into(),
        },
        questions,
    )
}
