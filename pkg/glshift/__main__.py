from glshift.cli import main

raise SystemExit(main())
