use crate::error::{Error, Result};

type Constructor<T, S> = Box<dyn Fn(&S) -> Result<Box<T>> + Send + Sync>;

struct Entry<T: ?Sized, S> {
    name: &'static str,
    summary: &'static str,
    build: Constructor<T, S>,
}

/// Named constructors for one family of interchangeable strategies.
pub struct Registry<T: ?Sized, S> {
    kind: &'static str,
    entries: Vec<Entry<T, S>>,
}

impl<T: ?Sized, S> Registry<T, S> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Later registrations under the same name replace earlier ones.
    pub fn register(
        &mut self,
        name: &'static str,
        summary: &'static str,
        build: impl Fn(&S) -> Result<Box<T>> + Send + Sync + 'static,
    ) -> &mut Self {
        self.entries.retain(|e| e.name != name);
        self.entries.push(Entry {
            name,
            summary,
            build: Box::new(build),
        });
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn summaries(&self) -> Vec<(&'static str, &'static str)> {
        self.entries.iter().map(|e| (e.name, e.summary)).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.name == name)
    }

    pub fn create(&self, name: &str, settings: &S) -> Result<Box<T>> {
        match self.entries.iter().find(|e| e.name == name) {
            Some(e) => (e.build)(settings),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                valid: self.names().join(", "),
            }),
        }
    }
}
