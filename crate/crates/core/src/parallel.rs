//! Cached rayon pools, one per worker count.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::{ThreadPool, ThreadPoolBuilder};

/// Environment variable giving the default worker count.
pub const WORKERS_ENV: &str = "PLUGPLAY_WORKERS";

/// Pool with exactly `workers` threads.
pub fn pool(workers: usize) -> Arc<ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let workers = workers.max(1);
    let mut map = POOLS.get_or_init(Default::default).lock().expect("pool cache poisoned");
    map.entry(workers)
        .or_insert_with(|| Arc::new(ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool")))
        .clone()
}

/// Worker count from [`WORKERS_ENV`], else the number of available cores.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
