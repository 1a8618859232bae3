# makes tests/ importable so the shared oracle helpers can be imported plainly
