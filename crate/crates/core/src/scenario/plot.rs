//! Gnuplot script reconstructing the standard figures: loading vs time,
//! building power with and without DR, the temperature quartet, voltage
//! tracking, and the reactive-power pair.

use super::Scenario;

pub fn render_plot_script(scenario: &Scenario, with_baseline: bool) -> String {
    let mut out = String::from(
        "# Render with: gnuplot plots.gp (run from the output directory)\n\
         set datafile separator ','\n\
         set key outside\n\
         set xlabel 'time [s]'\n\
         set term pngcairo size 1100,480\n\n",
    );

    for f in &scenario.file.feeders {
        out.push_str(&format!("set output 'loading_{id}.png'\nset ylabel 'loading [%]'\n", id = f.id));
        let mut series = vec![format!("'{id}.loading_max.csv' using 1:2 with steps title 'max loading'", id = f.id)];
        for c in &scenario.file.controllers {
            if let Some(lc) = &c.line_capacity {
                series.push(format!("{} title 'threshold' lw 2", lc.threshold_pct));
            }
        }
        out.push_str(&format!("plot {}\n\n", series.join(", \\\n     ")));
    }

    for b in &scenario.file.buildings {
        out.push_str(&format!("set output 'power_{id}.png'\nset ylabel 'P [kW]'\n", id = b.id));
        let mut series = vec![format!("'{id}.p_kw.csv' using 1:2 with steps title 'P'", id = b.id)];
        if with_baseline {
            series.push(format!(
                "'baseline/{id}.p_kw.csv' using 1:2 with steps title 'P (no DR)'",
                id = b.id
            ));
        }
        out.push_str(&format!("plot {}\n\n", series.join(", \\\n     ")));

        out.push_str(&format!(
            "set output 'temperatures_{id}.png'\nset ylabel 'T [K]'\n",
            id = b.id
        ));
        let mut series = Vec::new();
        for s in &scenario.file.sources {
            if s.id.contains("amb") {
                series.push(format!("'{}.out.csv' using 1:2 with lines title 'Tamb'", s.id));
            }
        }
        series.push(format!("'{id}.t_ret.csv' using 1:2 with lines title 'Tbui'", id = b.id));
        series.push(format!("'{id}.t_set.csv' using 1:2 with steps title 'Tbui-setpoint'", id = b.id));
        series.push(format!("'{id}.t_hvac.csv' using 1:2 with lines title 'Thvac'", id = b.id));
        out.push_str(&format!("plot {}\n\n", series.join(", \\\n     ")));
    }

    for c in &scenario.file.controllers {
        if let Some(vv) = &c.volt_var {
            out.push_str(&format!(
                "set output 'voltage_{id}.png'\nset ylabel 'V [pu]'\n",
                id = c.id
            ));
            out.push_str(&format!(
                "plot '{f}.v_{track}.csv' using 1:2 with lines title 'V {track}', \\\n     '{f}.v_{ctl}.csv' using 1:2 with lines title 'V {ctl}'\n\n",
                f = vv.feeder,
                track = vv.from_bus,
                ctl = vv.to_bus,
            ));
            out.push_str(&format!(
                "set output 'reactive_{id}.png'\nset ylabel 'Q [kvar]'\n",
                id = c.id
            ));
            out.push_str(&format!(
                "plot '{id}.total_q.csv' using 1:2 with steps title 'Total Q', \\\n     '{id}.delta_q.csv' using 1:2 with impulses title 'Delta Q'\n\n",
                id = c.id
            ));
        }
    }

    out
}
