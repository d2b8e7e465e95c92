"""Non-smooth start: the cross rounds off into a blob.

Writes VTK and CSV snapshots through the command-line driver so the output
directory looks exactly like a production run.
"""
import sys
import tempfile

from chsolve.cli import main

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="cross_")
code = main([
    "--preset", "cross", "--levels", "5", "--eps", "0.02", "--tau", "0.0001",
    "--n-steps", "40", "--snapshot-steps", "0,10,40", "--output-dir", out,
])
print("exit code", code, "- results in", out)
print(open(f"{out}/summary.txt").read())
