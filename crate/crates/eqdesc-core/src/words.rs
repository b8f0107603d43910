//! Number words shared by the verbalizer and the description parser.
//! British style with "and" after hundreds: 363 is
//! "three hundred and sixty three".

use crate::error::{Error, Result};

pub const MAX_NUMBER: u32 = 9999;

pub const ONES: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

pub const TEENS: [&str; 10] = [
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];

pub const TENS: [&str; 8] = [
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// Ordinals used for powers and roots ("second power of", "third root of").
pub const ORDINALS: [&str; 8] = [
    "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
];

pub fn ones_value(word: &str) -> Option<u32> {
    ONES.iter().position(|w| *w == word).map(|i| i as u32)
}

pub fn teens_value(word: &str) -> Option<u32> {
    TEENS
        .iter()
        .position(|w| *w == word)
        .map(|i| 10 + i as u32)
}

pub fn tens_value(word: &str) -> Option<u32> {
    TENS.iter()
        .position(|w| *w == word)
        .map(|i| 20 + 10 * i as u32)
}

/// Ordinal word for 2..=9.
pub fn ordinal_word(k: u32) -> Option<&'static str> {
    if (2..=9).contains(&k) {
        Some(ORDINALS[(k - 2) as usize])
    } else {
        None
    }
}

pub fn ordinal_value(word: &str) -> Option<u32> {
    ORDINALS
        .iter()
        .position(|w| *w == word)
        .map(|i| i as u32 + 2)
}

/// Append the words for `n` (1..=99) to `out`.
fn push_tail(n: u32, out: &mut Vec<&'static str>) {
    debug_assert!((1..=99).contains(&n));
    if n < 10 {
        out.push(ONES[n as usize]);
    } else if n < 20 {
        out.push(TEENS[(n - 10) as usize]);
    } else {
        out.push(TENS[(n / 10 - 2) as usize]);
        if n % 10 != 0 {
            out.push(ONES[(n % 10) as usize]);
        }
    }
}

/// Word tokens for `n` in 0..=9999.
pub fn number_to_word_tokens(n: u32) -> Result<Vec<&'static str>> {
    if n > MAX_NUMBER {
        return Err(Error::InvalidArgument(format!(
            "number {n} out of range 0..={MAX_NUMBER}"
        )));
    }
    if n == 0 {
        return Ok(vec!["zero"]);
    }
    let mut out = Vec::new();
    let thousands = n / 1000;
    let hundreds = (n / 100) % 10;
    let tail = n % 100;
    if thousands > 0 {
        out.push(ONES[thousands as usize]);
        out.push("thousand");
    }
    if hundreds > 0 {
        out.push(ONES[hundreds as usize]);
        out.push("hundred");
    }
    if tail > 0 {
        if thousands > 0 || hundreds > 0 {
            out.push("and");
        }
        push_tail(tail, &mut out);
    }
    Ok(out)
}

/// Words for `n` joined with spaces.
pub fn number_to_words(n: u32) -> Result<String> {
    Ok(number_to_word_tokens(n)?.join(" "))
}
