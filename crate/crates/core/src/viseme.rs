//! Phoneme and viseme inventories and the phoneme → viseme mapping.
//!
//! The built-in table groups the 39 ARPABET phonemes of the pronouncing
//! dictionary into 13 speaking viseme classes plus a silent class. `AH` is
//! assigned only to its dedicated `ah` class; the `aa` class holds `AA`, `AW`
//! and `AY`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SymbolError {
    #[error("unknown phoneme symbol `{0}`")]
    UnknownPhoneme(String),
    #[error("unknown viseme label `{0}`")]
    UnknownViseme(String),
    #[error("viseme map line {line}: {message}")]
    MapLine { line: usize, message: String },
}

macro_rules! symbol_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

symbol_enum! {
    /// One of the 39 stress-free ARPABET phonemes.
    Phoneme {
        AA => "AA", AE => "AE", AH => "AH", AO => "AO", AW => "AW", AY => "AY",
        B => "B", CH => "CH", D => "D", DH => "DH", EH => "EH", ER => "ER",
        EY => "EY", F => "F", G => "G", HH => "HH", IH => "IH", IY => "IY",
        JH => "JH", K => "K", L => "L", M => "M", N => "N", NG => "NG",
        OW => "OW", OY => "OY", P => "P", R => "R", S => "S", SH => "SH",
        T => "T", TH => "TH", UH => "UH", UW => "UW", V => "V", W => "W",
        Y => "Y", Z => "Z", ZH => "ZH",
    }
}

symbol_enum! {
    /// Visual speech class. Declaration order is the canonical sort order.
    Viseme {
        P => "p", T => "t", K => "k", Ch => "ch", F => "f", W => "w",
        Iy => "iy", Ey => "ey", Aa => "aa", Ah => "ah", Ao => "ao", Uh => "uh",
        Er => "er", Sil => "s",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisemeKind {
    Consonant,
    Vowel,
    Silent,
}

impl Viseme {
    pub fn kind(self) -> VisemeKind {
        use Viseme::*;
        match self {
            P | T | K | Ch | F | W => VisemeKind::Consonant,
            Iy | Ey | Aa | Ah | Ao | Uh | Er => VisemeKind::Vowel,
            Sil => VisemeKind::Silent,
        }
    }

    pub fn is_silent(self) -> bool {
        self == Viseme::Sil
    }
}

impl FromStr for Phoneme {
    type Err = SymbolError;

    /// Accepts dictionary spellings with lexical stress (`AH0`, `ey1`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bare = s.trim_end_matches(|c: char| c.is_ascii_digit());
        Phoneme::ALL
            .iter()
            .copied()
            .find(|p| p.label().eq_ignore_ascii_case(bare))
            .filter(|_| !bare.is_empty())
            .ok_or_else(|| SymbolError::UnknownPhoneme(s.to_string()))
    }
}

impl FromStr for Viseme {
    type Err = SymbolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        if lower == "sil" {
            return Ok(Viseme::Sil);
        }
        Viseme::ALL
            .iter()
            .copied()
            .find(|v| v.label() == lower)
            .ok_or_else(|| SymbolError::UnknownViseme(s.to_string()))
    }
}

/// Parse a whitespace-separated viseme stream such as `w ah t t ah p`.
pub fn parse_visemes(line: &str) -> Result<Vec<Viseme>, SymbolError> {
    line.split_whitespace().map(str::parse).collect()
}

pub fn format_visemes(visemes: &[Viseme]) -> String {
    let mut out = String::new();
    for (i, v) in visemes.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(v.label());
    }
    out
}

/// Total function from phonemes to visemes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisemeMap {
    table: [Viseme; 39],
}

impl Default for VisemeMap {
    fn default() -> Self {
        Self::builtin()
    }
}

impl VisemeMap {
    pub fn builtin() -> Self {
        use Phoneme as Ph;
        use Viseme as V;
        let mut table = [V::Sil; 39];
        let rows: &[(V, &[Ph])] = &[
            (V::P, &[Ph::B, Ph::P, Ph::M]),
            (V::T, &[Ph::D, Ph::T, Ph::S, Ph::Z, Ph::TH, Ph::DH]),
            (V::K, &[Ph::G, Ph::K, Ph::N, Ph::NG, Ph::L, Ph::Y, Ph::HH]),
            (V::Ch, &[Ph::JH, Ph::CH, Ph::SH, Ph::ZH]),
            (V::F, &[Ph::F, Ph::V]),
            (V::W, &[Ph::R, Ph::W]),
            (V::Iy, &[Ph::IY, Ph::IH]),
            (V::Ey, &[Ph::EH, Ph::EY, Ph::AE]),
            (V::Aa, &[Ph::AA, Ph::AW, Ph::AY]),
            (V::Ah, &[Ph::AH]),
            (V::Ao, &[Ph::AO, Ph::OY, Ph::OW]),
            (V::Uh, &[Ph::UH, Ph::UW]),
            (V::Er, &[Ph::ER]),
        ];
        for (viseme, phonemes) in rows {
            for p in *phonemes {
                table[p.index()] = *viseme;
            }
        }
        Self { table }
    }

    /// Built-in table with the entries of an override file applied on top.
    ///
    /// Lines are `PHONEME<TAB>viseme`; blank lines and `#` comments are
    /// skipped. Phonemes may not be mapped to the silent class.
    pub fn with_overrides(text: &str) -> Result<Self, SymbolError> {
        let mut map = Self::builtin();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(ph), Some(vis), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(SymbolError::MapLine {
                    line: line_no,
                    message: format!("expected `PHONEME<TAB>viseme`, got `{line}`"),
                });
            };
            let phoneme: Phoneme = ph.parse().map_err(|e: SymbolError| SymbolError::MapLine {
                line: line_no,
                message: e.to_string(),
            })?;
            let viseme: Viseme = vis.parse().map_err(|e: SymbolError| SymbolError::MapLine {
                line: line_no,
                message: e.to_string(),
            })?;
            if viseme.is_silent() {
                return Err(SymbolError::MapLine {
                    line: line_no,
                    message: format!("{phoneme} cannot map to the silent class"),
                });
            }
            map.table[phoneme.index()] = viseme;
        }
        Ok(map)
    }

    pub fn viseme(&self, phoneme: Phoneme) -> Viseme {
        self.table[phoneme.index()]
    }

    pub fn set(&mut self, phoneme: Phoneme, viseme: Viseme) {
        self.table[phoneme.index()] = viseme;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Phoneme, Viseme)> + '_ {
        Phoneme::ALL.iter().map(move |&p| (p, self.viseme(p)))
    }

    /// Phonemes belonging to one viseme class, in phoneme order.
    pub fn class_members(&self, viseme: Viseme) -> Vec<Phoneme> {
        self.iter().filter(|(_, v)| *v == viseme).map(|(p, _)| p).collect()
    }

    pub fn map_phonemes(&self, phonemes: &[Phoneme]) -> Vec<Viseme> {
        phonemes.iter().map(|&p| self.viseme(p)).collect()
    }
}

/// Map a phoneme label (stress digits allowed) through the built-in table.
pub fn phoneme_to_viseme(label: &str) -> Result<Viseme, SymbolError> {
    let p: Phoneme = label.parse()?;
    Ok(VisemeMap::builtin().viseme(p))
}
