//! Class vocabulary shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};

pub const BACKGROUND: &str = "background";

/// The seven on-road object classes targeted in BDD100K experiments.
pub const BDD100K_CLASSES: [&str; 7] = ["car", "truck", "bus", "person", "rider", "motor", "bike"];

/// Ordered class vocabulary. Index 0 is always the background class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassTable {
    names: Vec<String>,
}

impl ClassTable {
    /// Builds a table from foreground class names; background is prepended.
    pub fn from_foreground<I, S>(foreground: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names = vec![BACKGROUND.to_string()];
        names.extend(foreground.into_iter().map(Into::into));
        Self::new(names)
    }

    /// Builds a table from the full list of names, background first.
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(invalid_input("class table must not be empty"));
        }
        if names[0] != BACKGROUND {
            return Err(invalid_input(format!(
                "class index 0 must be `{BACKGROUND}`, found `{}`",
                names[0]
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(invalid_input(format!("class {i} has an empty name")));
            }
            if names[..i].contains(name) {
                return Err(invalid_input(format!("duplicate class name `{name}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn bdd100k() -> Self {
        Self::from_foreground(BDD100K_CLASSES).expect("static table is valid")
    }

    /// Number of classes including background (C + 1).
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_foreground(&self) -> usize {
        self.names.len() - 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn foreground(&self) -> &[String] {
        &self.names[1..]
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Case-insensitive lookup of a foreground class.
    pub fn foreground_index_ignore_case(&self, name: &str) -> Option<usize> {
        self.names
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, n)| n.eq_ignore_ascii_case(name))
            .map(|(i, _)| i)
    }
}

impl TryFrom<Vec<String>> for ClassTable {
    type Error = crate::Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<ClassTable> for Vec<String> {
    fn from(table: ClassTable) -> Self {
        table.names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_is_index_zero() {
        let t = ClassTable::from_foreground(["car", "bus"]).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.name(0), Some(BACKGROUND));
        assert_eq!(t.index_of("bus"), Some(2));
        assert_eq!(t.foreground_index_ignore_case("BUS"), Some(2));
        assert_eq!(t.foreground_index_ignore_case("background"), None);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(ClassTable::new(vec![]).is_err());
        assert!(ClassTable::new(vec!["car".into()]).is_err());
        assert!(ClassTable::from_foreground(["car", "car"]).is_err());
        assert!(ClassTable::from_foreground(["background"]).is_err());
    }

    #[test]
    fn serde_validates() {
        let t: ClassTable = serde_json::from_str(r#"["background","car"]"#).unwrap();
        assert_eq!(t.num_foreground(), 1);
        assert!(serde_json::from_str::<ClassTable>(r#"["car"]"#).is_err());
    }
}
