//! Data-parallel helpers. With the `parallel` feature these run on a rayon pool;
//! without it they degrade to plain sequential iteration. Every helper preserves
//! input order so results never depend on the worker count.

use crate::error::{Error, Result};

/// Worker pool handle. `Workers::new(1)` always runs on the calling thread.
#[derive(Debug)]
pub struct Workers {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
    threads: usize,
}

impl Workers {
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::ConfigInvalid(
                "worker count must be at least 1".into(),
            ));
        }
        #[cfg(feature = "parallel")]
        {
            let pool = if threads > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(threads)
                        .build()
                        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?,
                )
            } else {
                None
            };
            Ok(Workers { pool, threads })
        }
        #[cfg(not(feature = "parallel"))]
        Ok(Workers { threads })
    }

    pub fn sequential() -> Self {
        Workers::new(1).expect("one worker is valid")
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Run `f` inside the pool so nested helpers pick it up.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(f);
        }
        f()
    }

    /// Order-preserving map.
    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over owned items.
    pub fn map_owned<T, U, F>(&self, items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.into_par_iter().map(&f).collect());
        }
        items.into_iter().map(f).collect()
    }
}

impl Default for Workers {
    fn default() -> Self {
        Workers::sequential()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_workers_rejected() {
        assert!(matches!(Workers::new(0), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn map_preserves_order_across_worker_counts() {
        let items: Vec<u64> = (0..10_000).collect();
        let seq = Workers::new(1).unwrap().map(&items, |x| x * x);
        let par = Workers::new(4).unwrap().map(&items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[9_999], 9_999 * 9_999);
    }
}
