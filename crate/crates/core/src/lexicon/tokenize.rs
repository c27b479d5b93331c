//! Word tokenizer shared by dictionary loading and post tagging.
//!
//! Words are runs of alphanumeric characters (plus combining marks). An
//! apostrophe or hyphen between two word characters stays inside the word.
//! `#` starts a hashtag: the hashtag body also admits `_` and is always a
//! single token that never joins its neighbours into a phrase.

/// A token with half-open character offsets into the tokenized string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased token text with typographic apostrophes folded to `'`.
    pub text: String,
    pub start: usize,
    pub end: usize,
    /// True when this token continues a phrase with the previous token: the
    /// gap between them is whitespace only and neither is a hashtag.
    pub joins_prev: bool,
    pub hashtag: bool,
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || ('\u{0300}'..='\u{036f}').contains(&c)
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{02bc}' | '-' | '\u{2010}' | '\u{2011}')
}

fn fold(c: char) -> char {
    match c {
        '\u{2019}' | '\u{02bc}' => '\'',
        '\u{2010}' | '\u{2011}' => '-',
        c => c,
    }
}

/// Tokenizes `s`. Offsets count chars, not bytes.
pub fn tokenize(s: &str) -> Vec<Token> {
    let chars: Vec<char> = s.chars().collect();
    let mut tokens: Vec<Token> = Vec::new();
    let mut i = 0;
    // true while everything since the previous token was whitespace
    let mut clean_gap = false;

    while i < chars.len() {
        let c = chars[i];
        let hashtag = c == '#' && chars.get(i + 1).is_some_and(|&n| is_word(n) || n == '_');
        if hashtag || is_word(c) {
            let start = if hashtag { i + 1 } else { i };
            let inside = |c: char| is_word(c) || (hashtag && c == '_');
            let mut end = start;
            while end < chars.len() {
                let c = chars[end];
                let joined = is_joiner(c) && end > start && chars.get(end + 1).is_some_and(|&n| inside(n));
                if inside(c) || joined {
                    end += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[start..end]
                .iter()
                .flat_map(|c| c.to_lowercase())
                .map(fold)
                .collect();
            let joins_prev = !hashtag && clean_gap && tokens.last().is_some_and(|prev| !prev.hashtag);
            tokens.push(Token {
                text,
                start,
                end,
                joins_prev,
                hashtag,
            });
            clean_gap = true;
            i = end;
            continue;
        }
        if !c.is_whitespace() {
            clean_gap = false;
        }
        i += 1;
    }
    tokens
}

/// Lowercased tokens joined by single spaces; the lookup key of a surface form.
pub fn normalize_surface(surface: &str) -> String {
    let surface = surface.trim().trim_start_matches('#');
    let tokens: Vec<String> = tokenize(surface).into_iter().map(|t| t.text).collect();
    tokens.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        tokenize(s).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn splits_on_punctuation_and_space() {
        assert_eq!(
            words("Say hello, to my new friend! Fluoxetina!"),
            ["say", "hello", "to", "my", "new", "friend", "fluoxetina"]
        );
    }

    #[test]
    fn keeps_intra_word_apostrophes_and_hyphens() {
        assert_eq!(
            words("St John’s wort co-trimoxazole -x- don't'"),
            ["st", "john's", "wort", "co-trimoxazole", "x", "don't"]
        );
    }

    #[test]
    fn hashtags_are_single_tokens() {
        let tokens = tokenize("#heart_failure #anxiety meds");
        let texts: Vec<_> = tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["heart_failure", "anxiety", "meds"]);
        assert!(tokens.iter().take(2).all(|t| t.hashtag));
        assert!(tokens.iter().all(|t| !t.joins_prev));
        assert_eq!((tokens[0].start, tokens[0].end), (1, 14));
    }

    #[test]
    fn phrase_joins_only_across_whitespace() {
        let tokens = tokenize("heart  failure. stroke risk");
        let joins: Vec<_> = tokens.iter().map(|t| t.joins_prev).collect();
        assert_eq!(joins, [false, true, false, true]);
    }

    #[test]
    fn offsets_are_char_based() {
        let tokens = tokenize("😢 prozac");
        assert_eq!((tokens[0].start, tokens[0].end), (2, 8));
    }

    #[test]
    fn surface_normalization() {
        assert_eq!(normalize_surface("  St.   JOHN'S\twort "), "st john's wort");
        assert_eq!(normalize_surface("#420"), "420");
        assert_eq!(normalize_surface("!!"), "");
    }
}
