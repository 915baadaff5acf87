use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MulticopyError;

/// The thirteen projection configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConfigName {
    L0,
    L1,
    L2,
    C1,
    C2,
    C3,
    C4,
    C5,
    Cbar1,
    Cbar2,
    Cbar3,
    Lbar1,
    Lbar2,
}

/// Local configurations pair a-with-a and b-with-b qubits only; cross
/// configurations contain at least one a-with-b pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Local,
    Cross,
}

impl ConfigName {
    pub const ALL: [ConfigName; 13] = [
        ConfigName::L0,
        ConfigName::L1,
        ConfigName::L2,
        ConfigName::C1,
        ConfigName::C2,
        ConfigName::C3,
        ConfigName::C4,
        ConfigName::C5,
        ConfigName::Cbar1,
        ConfigName::Cbar2,
        ConfigName::Cbar3,
        ConfigName::Lbar1,
        ConfigName::Lbar2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigName::L0 => "l0",
            ConfigName::L1 => "l1",
            ConfigName::L2 => "l2",
            ConfigName::C1 => "c1",
            ConfigName::C2 => "c2",
            ConfigName::C3 => "c3",
            ConfigName::C4 => "c4",
            ConfigName::C5 => "c5",
            ConfigName::Cbar1 => "cbar1",
            ConfigName::Cbar2 => "cbar2",
            ConfigName::Cbar3 => "cbar3",
            ConfigName::Lbar1 => "lbar1",
            ConfigName::Lbar2 => "lbar2",
        }
    }

    pub fn class(self) -> Class {
        match self {
            ConfigName::L0
            | ConfigName::Cbar1
            | ConfigName::Cbar2
            | ConfigName::Cbar3
            | ConfigName::Lbar1
            | ConfigName::Lbar2 => Class::Cross,
            _ => Class::Local,
        }
    }
}

impl fmt::Display for ConfigName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfigName {
    type Err = MulticopyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConfigName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| MulticopyError::UnknownConfig(s.to_string()))
    }
}

impl Serialize for ConfigName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ConfigName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    A,
    B,
}

/// One qubit of one copy: side `a` or `b`, copy numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Qubit {
    pub side: Side,
    pub copy: u8,
}

impl Qubit {
    pub fn a(copy: u8) -> Self {
        Qubit { side: Side::A, copy }
    }

    pub fn b(copy: u8) -> Self {
        Qubit { side: Side::B, copy }
    }

    pub(crate) fn copy_index(self) -> usize {
        usize::from(self.copy) - 1
    }
}

impl fmt::Display for Qubit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.side {
            Side::A => 'a',
            Side::B => 'b',
        };
        write!(f, "{side}{}", self.copy)
    }
}

impl FromStr for Qubit {
    type Err = MulticopyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MulticopyError::InvalidConfig(format!("bad qubit label `{s}`"));
        let mut chars = s.chars();
        let side = match chars.next() {
            Some('a') => Side::A,
            Some('b') => Side::B,
            _ => return Err(bad()),
        };
        let copy: u8 = chars.as_str().parse().map_err(|_| bad())?;
        if copy == 0 {
            return Err(bad());
        }
        Ok(Qubit { side, copy })
    }
}

/// Unordered pair of qubits projected onto the singlet. Stored with the
/// smaller label first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QubitPair(Qubit, Qubit);

impl QubitPair {
    pub fn new(x: Qubit, y: Qubit) -> Self {
        if x <= y {
            QubitPair(x, y)
        } else {
            QubitPair(y, x)
        }
    }

    pub fn first(&self) -> Qubit {
        self.0
    }

    pub fn second(&self) -> Qubit {
        self.1
    }

    pub fn is_cross(&self) -> bool {
        self.0.side != self.1.side
    }

    pub fn labels(&self) -> [String; 2] {
        [self.0.to_string(), self.1.to_string()]
    }
}

/// A named configuration with its resolved pair set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionConfig {
    pub name: ConfigName,
    pub copies: usize,
    pub pairs: Vec<QubitPair>,
}

impl ProjectionConfig {
    pub fn new(
        name: ConfigName,
        copies: usize,
        mut pairs: Vec<QubitPair>,
    ) -> Result<Self, MulticopyError> {
        pairs.sort();
        let config = ProjectionConfig { name, copies, pairs };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), MulticopyError> {
        let err = |m: String| Err(MulticopyError::InvalidConfig(format!("{}: {m}", self.name)));
        if !(1..=4).contains(&self.copies) {
            return err(format!("{} copies (supported: 1 to 4)", self.copies));
        }
        if self.pairs.is_empty() {
            return err("no pairs".into());
        }
        let mut seen = Vec::new();
        for pair in &self.pairs {
            for q in [pair.first(), pair.second()] {
                if q.copy_index() >= self.copies {
                    return err(format!("qubit {q} outside {} copies", self.copies));
                }
                if seen.contains(&q) {
                    return err(format!("qubit {q} appears twice"));
                }
                seen.push(q);
            }
            let same_copy = pair.first().copy == pair.second().copy;
            if same_copy && !(self.copies == 1 && pair.is_cross()) {
                return err(format!(
                    "pair ({}, {}) joins qubits of one copy",
                    pair.first(),
                    pair.second()
                ));
            }
        }
        let any_cross = self.pairs.iter().any(QubitPair::is_cross);
        match (self.name.class(), any_cross) {
            (Class::Local, true) => err("local configuration contains an a-b pair".into()),
            (Class::Cross, false) => err("cross configuration has no a-b pair".into()),
            _ => Ok(()),
        }
    }

    pub fn pair_labels(&self) -> Vec<[String; 2]> {
        self.pairs.iter().map(QubitPair::labels).collect()
    }
}
