# Empty for now, add tests here later
