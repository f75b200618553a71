"""Workbench for proving termination of busy-waiting programs under fair scheduling.

The pieces fit together like this: `lang` defines the command language and its
concrete syntax; `semantics` runs thread pools under pluggable schedulers and
decides fair termination; `resources` implements the obligation/credit assertion
logic; `proof` checks and synthesizes derivations of termination triples;
`annotated` replays executions with ghost resources threaded through them; and
`pograph` builds program order graphs over annotated traces and checks the
leaf balance that makes the whole story sound.
"""

__version__ = "0.1.0"
