//! Named-parameter traversal shared by layers, optimizers, checkpoints and
//! gradient checks.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A structure owning named parameter tensors.
///
/// Gradients use the same type as the parameters they belong to, so the two
/// always visit their tensors in the same order with the same names.
pub trait Parameters<T: Scalar> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>));

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>));

    fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name, t)));
        out
    }

    /// Euclidean norm over every entry of every tensor.
    fn global_norm(&self) -> T {
        let mut sq = T::zero();
        self.visit("", &mut |_, t| {
            for &x in t.data() {
                sq += x * x;
            }
        });
        sq.sqrt()
    }

    /// Rescales in place so that [`Parameters::global_norm`] is at most
    /// `max_norm`; returns the norm before clipping.
    fn clip_global_norm(&mut self, max_norm: T) -> T
    where
        Self: Sized,
    {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale_params(max_norm / norm);
        }
        norm
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }

    /// A copy with every tensor set to zero.
    fn zeroed(&self) -> Self
    where
        Self: Clone,
    {
        let mut out = self.clone();
        out.visit_mut("", &mut |_, t| t.fill(T::zero()));
        out
    }

    /// `self += alpha * other`, tensor by tensor.
    fn axpy_params(&mut self, alpha: T, other: &Self)
    where
        Self: Sized,
    {
        let others: Vec<&Tensor<T>> = other.named_params().into_iter().map(|(_, t)| t).collect();
        let mut i = 0;
        self.visit_mut("", &mut |_, t| {
            t.axpy(alpha, others[i]);
            i += 1;
        });
    }

    fn scale_params(&mut self, alpha: T) {
        self.visit_mut("", &mut |_, t| t.scale(alpha));
    }

    /// Applies `f` to the tensor registered under `name`; returns whether it
    /// was found.
    fn with_param_mut(&mut self, name: &str, f: &mut dyn FnMut(&mut Tensor<T>)) -> bool {
        let mut found = false;
        self.visit_mut("", &mut |n, t| {
            if n == name {
                f(t);
                found = true;
            }
        });
        found
    }
}

/// Copies tensors into `model` by name, requiring exactly the names and
/// shapes the model already has.
pub fn assign_named<T: Scalar, P: Parameters<T>>(
    model: &mut P,
    tensors: &std::collections::BTreeMap<String, Tensor<T>>,
) -> Result<(), String> {
    let mut problem = None;
    let mut seen = 0usize;
    model.visit_mut("", &mut |name, t| {
        if problem.is_some() {
            return;
        }
        match tensors.get(&name) {
            Some(src) if src.shape() == t.shape() => {
                *t = src.clone();
                seen += 1;
            }
            Some(src) => {
                problem = Some(format!(
                    "{name}: shape {:?}, expected {:?}",
                    src.shape(),
                    t.shape()
                ))
            }
            None => problem = Some(format!("{name} missing")),
        }
    });
    if let Some(p) = problem {
        return Err(p);
    }
    if seen != tensors.len() {
        let known: std::collections::BTreeSet<String> =
            model.named_params().into_iter().map(|(n, _)| n).collect();
        let extra: Vec<&String> = tensors.keys().filter(|k| !known.contains(*k)).collect();
        return Err(format!("unexpected parameters {extra:?}"));
    }
    Ok(())
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<T: Scalar> Parameters<T> for Tensor<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(prefix.to_string(), self);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(prefix.to_string(), self);
    }
}

impl<T: Scalar, P: Parameters<T>> Parameters<T> for Vec<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

impl<T: Scalar, P: Parameters<T>> Parameters<T> for Option<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        if let Some(p) = self {
            p.visit(prefix, f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        if let Some(p) = self {
            p.visit_mut(prefix, f);
        }
    }
}

/// Implements [`Parameters`] for a struct by visiting the listed fields,
/// each of which is a tensor or itself implements [`Parameters`].
macro_rules! tensor_fields {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl<T: $crate::scalar::Scalar> $crate::params::Parameters<T> for $ty<T> {
            fn visit<'a>(
                &'a self,
                prefix: &str,
                f: &mut dyn FnMut(String, &'a $crate::tensor::Tensor<T>),
            ) {
                $( $crate::params::Parameters::<T>::visit(
                    &self.$field,
                    &$crate::params::join(prefix, stringify!($field)),
                    f,
                ); )*
            }

            fn visit_mut(
                &mut self,
                prefix: &str,
                f: &mut dyn FnMut(String, &mut $crate::tensor::Tensor<T>),
            ) {
                $( $crate::params::Parameters::<T>::visit_mut(
                    &mut self.$field,
                    &$crate::params::join(prefix, stringify!($field)),
                    f,
                ); )*
            }
        }
    };
}
pub(crate) use tensor_fields;
