use std::collections::{BTreeSet, VecDeque};

use crate::ids::{JobId, TaskId, TaskKind};

use super::MapReduceError;

/// Dispatches ordered task lists one at a time: list `k + 1` is released only
/// after every task of list `k` has completed.
#[derive(Debug, Default)]
pub struct SequentialBroker {
    lists: VecDeque<Vec<TaskId>>,
    outstanding: BTreeSet<TaskId>,
}

impl SequentialBroker {
    pub fn new(lists: impl IntoIterator<Item = Vec<TaskId>>) -> Self {
        Self { lists: lists.into_iter().collect(), outstanding: BTreeSet::new() }
    }

    /// Releases the next non-empty list, or `None` if the current one is still
    /// running or nothing is left.
    pub fn next_batch(&mut self) -> Option<Vec<TaskId>> {
        if !self.outstanding.is_empty() {
            return None;
        }
        while let Some(list) = self.lists.pop_front() {
            if list.is_empty() {
                log::warn!("skipping empty task list in sequential submission");
                continue;
            }
            self.outstanding.extend(list.iter().copied());
            return Some(list);
        }
        None
    }

    /// Marks a task done. Returns `true` when this completes the current list.
    pub fn complete(&mut self, task: TaskId) -> Result<bool, MapReduceError> {
        if !self.outstanding.remove(&task) {
            return Err(MapReduceError::UnknownTask(task));
        }
        Ok(self.outstanding.is_empty())
    }

    pub fn in_flight(&self) -> usize {
        self.outstanding.len()
    }

    pub fn is_finished(&self) -> bool {
        self.outstanding.is_empty() && self.lists.iter().all(Vec::is_empty)
    }
}

/// Emitted once all maps of a job have finished.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReduceLaunch {
    pub job: JobId,
}

/// Per-job progress counters kept by the job tracker.
#[derive(Debug)]
pub struct JobProgress {
    job: JobId,
    nm: u32,
    nr: u32,
    maps_done: BTreeSet<u32>,
    reduces_done: BTreeSet<u32>,
    reduces_launched: bool,
}

impl JobProgress {
    pub fn new(job: JobId, nm: u32, nr: u32) -> Self {
        Self { job, nm, nr, maps_done: BTreeSet::new(), reduces_done: BTreeSet::new(), reduces_launched: false }
    }

    pub fn maps_done(&self) -> u32 {
        self.maps_done.len() as u32
    }

    pub fn reduces_done(&self) -> u32 {
        self.reduces_done.len() as u32
    }

    pub fn reduces_launched(&self) -> bool {
        self.reduces_launched
    }

    pub fn is_complete(&self) -> bool {
        self.reduces_done() == self.nr
    }

    fn check(&self, task: TaskId, kind: TaskKind, limit: u32) -> Result<(), MapReduceError> {
        if task.job != self.job || task.kind != kind || task.index >= limit {
            return Err(MapReduceError::UnknownTask(task));
        }
        Ok(())
    }

    /// Counts a finished map; yields the reduce launch on the last one.
    pub fn on_map_complete(&mut self, task: TaskId) -> Result<Option<ReduceLaunch>, MapReduceError> {
        self.check(task, TaskKind::Map, self.nm)?;
        if !self.maps_done.insert(task.index) {
            return Err(MapReduceError::DuplicateCompletion(task));
        }
        if self.maps_done() == self.nm && !self.reduces_launched {
            self.reduces_launched = true;
            return Ok(Some(ReduceLaunch { job: self.job }));
        }
        Ok(None)
    }

    /// Counts a finished reduce; returns `true` when the job is complete.
    pub fn on_reduce_complete(&mut self, task: TaskId) -> Result<bool, MapReduceError> {
        self.check(task, TaskKind::Reduce, self.nr)?;
        if !self.reduces_launched {
            return Err(MapReduceError::Protocol(format!("reduce {task} finished before reduces were launched")));
        }
        if !self.reduces_done.insert(task.index) {
            return Err(MapReduceError::DuplicateCompletion(task));
        }
        Ok(self.is_complete())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const J: JobId = JobId(0);

    #[test]
    fn barrier_on_last_map() {
        let mut p = JobProgress::new(J, 2, 1);
        assert_eq!(p.on_map_complete(TaskId::map(J, 1)).unwrap(), None);
        assert_eq!(p.on_map_complete(TaskId::map(J, 0)).unwrap(), Some(ReduceLaunch { job: J }));
        assert!(p.reduces_launched());
        assert!(p.on_reduce_complete(TaskId::reduce(J, 0)).unwrap());
    }

    #[test]
    fn duplicate_and_foreign_completions() {
        let mut p = JobProgress::new(J, 2, 1);
        p.on_map_complete(TaskId::map(J, 0)).unwrap();
        assert_eq!(
            p.on_map_complete(TaskId::map(J, 0)),
            Err(MapReduceError::DuplicateCompletion(TaskId::map(J, 0)))
        );
        assert!(p.on_map_complete(TaskId::map(J, 2)).is_err());
        assert!(p.on_map_complete(TaskId::map(JobId(9), 1)).is_err());
        assert!(matches!(p.on_reduce_complete(TaskId::reduce(J, 0)), Err(MapReduceError::Protocol(_))));
        assert_eq!(p.maps_done(), 1);
    }

    #[test]
    fn broker_releases_lists_in_order() {
        let maps = vec![TaskId::map(J, 0), TaskId::map(J, 1)];
        let reduces = vec![TaskId::reduce(J, 0)];
        let mut b = SequentialBroker::new([maps.clone(), vec![], reduces.clone()]);
        assert_eq!(b.next_batch(), Some(maps));
        assert_eq!(b.next_batch(), None);
        assert!(!b.complete(TaskId::map(J, 1)).unwrap());
        assert!(b.complete(TaskId::map(J, 0)).unwrap());
        assert_eq!(b.next_batch(), Some(reduces));
        assert!(b.complete(TaskId::reduce(J, 0)).unwrap());
        assert_eq!(b.next_batch(), None);
        assert!(b.is_finished());
        assert!(b.complete(TaskId::reduce(J, 0)).is_err());
    }

    #[test]
    fn broker_single_list() {
        let only = vec![TaskId::map(J, 0)];
        let mut b = SequentialBroker::new([only.clone()]);
        assert_eq!(b.next_batch(), Some(only));
        assert!(b.complete(TaskId::map(J, 0)).unwrap());
        assert!(b.is_finished());
    }
}
