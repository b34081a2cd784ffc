"""Command-line tool"""

import argparse
import logging
import pathlib
import sys
from typing import Any, Dict, List, Optional, Union

import numpy as np

from degensolve import __version__
from degensolve.basics import DegenSolveError, DivergenceError, ExitStatus, ValidationError
from degensolve.command_basics import default_out, default_threads
from degensolve.config import COMMANDS, RunConfig, load_config
from degensolve.nonlinear import NonlinearSpec, TRACE_COLUMNS, ball_check, lipschitz_probe, picard_solve
from degensolve.report import RunReport
from degensolve.solve1d import Problem1D, Solution1D
from degensolve.solve2d import Solution2D, rescale, solve_2d_reduced
from degensolve.suite import run_suite
from degensolve.sysinf import STUDY_COLUMNS, SystemSpec, truncate_and_solve, truncation_study
from degensolve.verdict import Check, Verdict
from degensolve.verify import REPORT_COLUMNS, SweepResult, coercivity_report, solve, sweep_lambda, sweep_t

EXIT_HELP = """exit statuses:
  0  success, all exercised checks pass
  2  configuration or validation error
  3  solver failure
  4  acceptance check failed
  5  sweep finished with failed points
"""

SOLUTION_1D_COLUMNS = ["index", "x", "X", "component", "u_re", "u_im", "u1_re", "u1_im", "u2_re", "u2_im"]

SOLUTION_2D_COLUMNS = ["i", "j", "x", "y", "component", "u_re", "u_im"]


def solution_rows_1d(s: Solution1D) -> List[Dict[str, Any]]:
    """Nodal values of a 1D solution"""
    g = s.u.grid
    rows = []
    for i in range(g.n):
        for m in range(s.u.dim_e):
            u, u1, u2 = (complex(f.values[i, m]) for f in (s.u, s.u1, s.u2))
            rows.append({"index": i, "x": g.x_nodes[i], "X": g.y_nodes[i], "component": m + 1,
                         "u_re": u.real, "u_im": u.imag, "u1_re": u1.real, "u1_im": u1.imag,
                         "u2_re": u2.real, "u2_im": u2.imag})
    return rows


def solution_rows_2d(s: Solution2D) -> List[Dict[str, Any]]:
    """Nodal values of a 2D solution"""
    g = s.u.grid
    v = s.u.values
    rows = []
    for i, x in enumerate(g.gx.x_nodes):
        for j, y in enumerate(g.gy.x_nodes):
            for m in range(v.shape[-1]):
                u = complex(v[i, j, m])
                rows.append({"i": i, "j": j, "x": x, "y": y, "component": m + 1, "u_re": u.real, "u_im": u.imag})
    return rows


class Runner:
    """Run a validated configuration into a report"""
    def __init__(self, config: RunConfig):
        self.logger = logging.getLogger("runner")
        self.config = config

    def run(self, report: RunReport) -> RunReport:
        """Dispatch to the subcommand"""
        c = self.config
        self.logger.info("%s: %s", c.command, c.problem if c.problem is not None else "reference suite")
        handler = {
            "solve1d": self.run_solve,
            "solve2d": self.run_solve,
            "moving": self.run_solve,
            "sweep-lambda": self.run_sweep_lambda,
            "sweep-t": self.run_sweep_t,
            "nonlinear": self.run_nonlinear,
            "system": self.run_system,
            "verify-all": self.run_verify_all,
        }[c.command]
        handler(report)
        return report

    def run_solve(self, report: RunReport):
        """Single solve with its coercivity report"""
        c = self.config
        p = c.problem
        if c.command == "solve2d" and c.solver == "reduced":
            s = solve_2d_reduced(p)
        else:
            s = solve(p)
        r = coercivity_report(p, s, c.norm_method)
        report.results["report"] = r.get_json()
        report.results["residual"] = s.residual_norm
        report.add_table("report", REPORT_COLUMNS, [r.row(0)])
        if isinstance(p, Problem1D):
            report.add_table("solution", SOLUTION_1D_COLUMNS, solution_rows_1d(s))
        else:
            report.add_table("solution", SOLUTION_2D_COLUMNS, solution_rows_2d(s))
            if p.moving is not None:
                x = rescale(p)
                report.results["moving"] = {"extents": [x.physical.a, x.physical.b],
                                            "multipliers": list(x.multipliers), "weights": list(x.weights),
                                            "condition": s.condition}

    def sweep_table(self, report: RunReport, name: str, r: SweepResult) -> bool:
        """Add sweep rows, true when every point solved"""
        report.add_table(name, REPORT_COLUMNS, [rep.row(i) for i, rep in enumerate(r.reports)])
        report.results[name] = r.get_json()
        if r.errors:
            self.logger.warning("%d of %d points failed", r.errors, len(r.reports))
            report.partial = True
        return not r.errors

    def run_sweep_lambda(self, report: RunReport):
        """Sweep over the sector sample"""
        c = self.config
        low, high = c.checks.ratio_bracket
        r = sweep_lambda(c.problem, c.sector, c.threads, c.norm_method, high)
        if self.sweep_table(report, "sweep_lambda", r):
            report.add_check(Check.at_most("ratio_slope", r.slope, c.checks.slope_tolerance))
            report.add_check(Check.within("max_ratio", r.max_ratio, low, high))

    def run_sweep_t(self, report: RunReport):
        """Sweep over small parameter values"""
        c = self.config
        r = sweep_t(c.problem, c.t_values, c.threads, c.norm_method)
        if self.sweep_table(report, "sweep_t", r):
            report.add_check(Check.at_most("ratio_spread", r.spread(), c.checks.t_spread))

    def run_nonlinear(self, report: RunReport):
        """Picard iteration with Lipschitz probe and ball check"""
        c = self.config
        n = c.nonlinear
        spec = NonlinearSpec(c.problem, n.f_law, n.g_law, n.mu_r, n.radius, c.seed)
        try:
            u, trace = picard_solve(spec, n.tol, n.max_iter, n.shrink)
        except DivergenceError as e:
            if e.trace is not None:
                report.add_table("picard", TRACE_COLUMNS, [s.row() for s in e.trace.steps])
                report.results["picard"] = e.trace.get_json()
            raise
        report.add_table("picard", TRACE_COLUMNS, [s.row() for s in trace.steps])
        report.results["picard"] = trace.get_json()
        report.add_table("solution", SOLUTION_2D_COLUMNS, solution_rows_2d(u))
        probe = lipschitz_probe(spec, n.samples)
        report.results["lipschitz"] = probe.get_json()
        ball = ball_check(trace, n.radius, probe.mu_hat)
        report.results["ball"] = ball.get_json()
        report.add_check(Check("picard_converged", Verdict.of(trace.converged)))
        report.add_check(Check("stayed_in_ball", Verdict.of(ball.stayed_in_ball)))
        report.add_check(Check.at_most("lipschitz", probe.mu_hat, n.mu_r))

    def run_system(self, report: RunReport):
        """Truncated system solve and self-convergence study"""
        c = self.config
        y = c.system
        spec = SystemSpec(y.d_law, c.problem, y.a_law, y.b_law, y.mu, y.n, y.support)
        result = truncate_and_solve(spec)
        report.results["system"] = result.get_json()
        report.add_check(Check("decay_finite", Verdict.of(result.decay.finite)))
        if len(y.n_list) > 1:
            study = truncation_study(spec, y.n_list, c.threads)
            report.add_table("truncation", STUDY_COLUMNS, [r.row() for r in study.rows])
            report.results["truncation"] = study.get_json()
            report.add_check(Check("truncation_monotone", Verdict.of(study.monotone())))

    def run_verify_all(self, report: RunReport):
        """Acceptance suite on the frozen reference problems"""
        run_suite(report, self.config, self.config.suite or None)


class DegenSolveTool:
    """Command-line tool"""
    def __init__(self):
        self.logger = logging.getLogger("runner")

    def parser(self) -> argparse.ArgumentParser:
        """Argument parser"""
        parser = argparse.ArgumentParser(prog="degensolve", description="Degenerate operator equation solver",
                                         epilog=EXIT_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
        parser.add_argument("-l", "--log", dest="log_level", choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'],
                            help="Set the logging level", default=None)
        parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--config", "-c", type=pathlib.Path, help="Run configuration JSON file")
        common.add_argument("--out", "-o", help="Output directory, default from DEGENSOLVE_OUT")
        common.add_argument("--threads", "-t", type=int, help="Worker threads, default from DEGENSOLVE_THREADS")

        subparsers = parser.add_subparsers(title="commands", dest="command")
        subparsers.required = True
        subparsers.add_parser("solve1d", parents=[common], help="Solve 1D problem")
        subparsers.add_parser("solve2d", parents=[common], help="Solve 2D problem")
        subparsers.add_parser("sweep-lambda", parents=[common], help="Coercivity sweep over lambda sector")
        subparsers.add_parser("sweep-t", parents=[common], help="Coercivity sweep over small parameters")
        subparsers.add_parser("moving", parents=[common], help="Solve on a moving domain")
        subparsers.add_parser("nonlinear", parents=[common], help="Picard iteration of a nonlinear problem")
        subparsers.add_parser("system", parents=[common], help="Truncated infinite system")
        subparsers.add_parser("verify-all", parents=[common], help="Run the acceptance suite")
        assert set(subparsers.choices) == set(COMMANDS)
        return parser

    def run(self, argv: Optional[List[str]] = None) -> ExitStatus:
        """Run the tool, returns exit status"""
        args = self.parser().parse_args(argv)
        logging.basicConfig(format='%(message)s', level=getattr(logging, args.log_level or 'INFO'))

        report = RunReport(args.command)
        out: Union[str, None] = args.out
        try:
            config = load_config(args.config, args.command, default_threads(), default_out())
            if args.threads is not None:
                if args.threads < 1:
                    raise ValidationError(f"--threads {args.threads} below 1")
                config.threads = args.threads
                config.echo["threads"] = args.threads
            if out is not None:
                config.out = out
                config.echo["out"] = out
            out = config.out
            report.echo = config.get_json()
            Runner(config).run(report)
        except DegenSolveError as e:
            report.fail(e)
        except (FloatingPointError, np.linalg.LinAlgError) as e:
            report.fail(DegenSolveError(f"numerical failure: {e}"))
        report.finish()
        report.write(pathlib.Path(out or default_out()))
        status = report.exit_status()
        self.logger.info("%s: %s, exit status %d", args.command, report.verdict().value, int(status))
        return status


def main():
    """Main entry point"""
    sys.exit(int(DegenSolveTool().run()))


if __name__ == "__main__":
    main()
