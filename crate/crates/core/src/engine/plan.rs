use super::{ControlFile, EngineError, Step};

/// One step of an expanded plan, with the task and index it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedStep<'a> {
    pub task: &'a str,
    pub index: usize,
    pub step: &'a Step,
}

/// Expands `requested` depth-first into the flat list of non-`task` steps.
///
/// A task referenced twice is expanded twice. Touches neither the store nor
/// the filesystem.
pub fn plan<'a>(control: &'a ControlFile, requested: &[&str]) -> Result<Vec<PlannedStep<'a>>, EngineError> {
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for name in requested {
        expand(control, name, &mut stack, &mut out)?;
    }
    Ok(out)
}

fn expand<'a>(
    control: &'a ControlFile,
    name: &str,
    stack: &mut Vec<&'a str>,
    out: &mut Vec<PlannedStep<'a>>,
) -> Result<(), EngineError> {
    let (task, steps) = control
        .entry(name)
        .ok_or_else(|| EngineError::UnknownTask(name.to_owned()))?;
    if let Some(pos) = stack.iter().position(|t| *t == task) {
        let mut cycle: Vec<String> = stack[pos..].iter().map(|s| s.to_string()).collect();
        cycle.push(task.to_owned());
        return Err(EngineError::TaskCycle(cycle));
    }
    stack.push(task);
    for (index, step) in steps.iter().enumerate() {
        match step {
            Step::Task(sub) => expand(control, sub, stack, out)?,
            step => out.push(PlannedStep { task, index, step }),
        }
    }
    stack.pop();
    Ok(())
}
