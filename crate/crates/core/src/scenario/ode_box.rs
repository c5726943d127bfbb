//! Generic model-exchange module for a dense linear ODE, used by the solver
//! benchmark scenarios.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
use crate::kernel::{Ctx, Module, ModuleDescriptor, ModuleKind, PortSpec};
use crate::ode::{LinearOde, OdeModel};
use crate::qss::QssOptions;
use crate::value::{Value, ValueKind};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearOdeDecl {
    pub id: String,
    /// Row-major system matrix.
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
}

pub struct LinearOdeModule {
    id: String,
    model: LinearOde,
    opts: QssOptions,
}

impl LinearOdeModule {
    pub fn new(decl: &LinearOdeDecl, opts: QssOptions) -> Result<Self, ConfigError> {
        let n = decl.x0.len();
        if decl.a.len() != n || decl.a.iter().any(|r| r.len() != n) {
            return Err(ConfigError::Invalid(format!(
                "linear_ode `{}`: A must be {n}x{n} to match x0",
                decl.id
            )));
        }
        let m = decl.b.first().map(|r| r.len()).unwrap_or(0);
        if !decl.b.is_empty() && (decl.b.len() != n || decl.b.iter().any(|r| r.len() != m)) {
            return Err(ConfigError::Invalid(format!(
                "linear_ode `{}`: B must have {n} rows of equal length",
                decl.id
            )));
        }
        let a = DMatrix::from_fn(n, n, |i, j| decl.a[i][j]);
        let b = DMatrix::from_fn(n, m, |i, j| decl.b[i][j]);
        let x0 = DVector::from_vec(decl.x0.clone());
        Ok(LinearOdeModule { id: decl.id.clone(), model: LinearOde::new(a, b, x0), opts })
    }
}

impl Module for LinearOdeModule {
    fn descriptor(&self) -> ModuleDescriptor {
        let mut ports: Vec<PortSpec> = (0..self.model.num_inputs())
            .map(|k| PortSpec::input(&format!("u{k}"), ValueKind::Real))
            .collect();
        ports.extend((0..self.model.dim()).map(|j| PortSpec::output(&format!("x{j}"), ValueKind::Real)));
        ModuleDescriptor::new(&self.id, ModuleKind::ModelExchange).with_ports(ports)
    }

    fn ode(&self) -> Option<&dyn OdeModel> {
        Some(&self.model)
    }

    fn qss_options(&self) -> Option<QssOptions> {
        Some(self.opts.clone())
    }

    fn ode_input_slot(&self, port: usize) -> Option<usize> {
        (port < self.model.num_inputs()).then_some(port)
    }

    fn ode_outputs(&mut self, q: &[f64], ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let n_in = self.model.num_inputs();
        for (j, &v) in q.iter().enumerate() {
            ctx.emit(n_in + j, Value::real(v));
        }
        Ok(())
    }
}
