//! Home of the `acceptance` test target. The crate name sorts after the
//! other workspace members, so their tests run before the long suite.
