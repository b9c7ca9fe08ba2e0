from stabilis.cli import app

app(prog_name='stabilis')
