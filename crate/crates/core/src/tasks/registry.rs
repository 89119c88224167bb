use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use super::{
    ChainSum, CountBits, Countdown, EightQueens, Game24, Gcd, Letters, MatrixRotation, NumberSorting, ObjectCounting,
    PluginDescriptor, PluginTask, SpellBackward, StringInsertion, Task, TaskError,
};

/// Name-indexed task lookup.
#[derive(Clone, Default)]
pub struct TaskRegistry {
    tasks: BTreeMap<String, Arc<dyn Task>>,
}

impl TaskRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// All built-in tasks.
    pub fn builtin() -> Self {
        let builtins: [Arc<dyn Task>; 12] = [
            Arc::new(Game24),
            Arc::new(EightQueens),
            Arc::new(Letters),
            Arc::new(Gcd),
            Arc::new(CountBits),
            Arc::new(ChainSum),
            Arc::new(NumberSorting),
            Arc::new(SpellBackward),
            Arc::new(MatrixRotation),
            Arc::new(ObjectCounting),
            Arc::new(StringInsertion),
            Arc::new(Countdown),
        ];
        let mut reg = Self::empty();
        for t in builtins {
            reg.register(t).expect("built-in names are unique");
        }
        reg
    }

    pub fn register(&mut self, task: Arc<dyn Task>) -> Result<(), TaskError> {
        let name = task.name().to_string();
        if self.tasks.contains_key(&name) {
            return Err(TaskError::Duplicate(name));
        }
        self.tasks.insert(name, task);
        Ok(())
    }

    pub fn register_plugin(&mut self, descriptor: PluginDescriptor) -> Result<(), TaskError> {
        self.register(Arc::new(PluginTask::new(descriptor)?))
    }

    /// Registers every descriptor in a JSON array file. Returns how many were added.
    pub fn load_plugins(&mut self, path: &Path) -> Result<usize, TaskError> {
        let fail = |message: String| TaskError::Plugin {
            task: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        let descriptors: Vec<PluginDescriptor> = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        let n = descriptors.len();
        for d in descriptors {
            self.register_plugin(d)?;
        }
        Ok(n)
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Task>, TaskError> {
        self.tasks.get(name).cloned().ok_or_else(|| TaskError::UnknownTask {
            name: name.to_string(),
            known: self.names(),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.tasks.keys().cloned().collect()
    }

    /// Resolves `all` or a comma-separated list of names.
    pub fn select(&self, spec: &str) -> Result<Vec<Arc<dyn Task>>, TaskError> {
        if spec.trim() == "all" {
            return Ok(self.tasks.values().cloned().collect());
        }
        spec.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|name| self.get(name))
            .collect()
    }
}
