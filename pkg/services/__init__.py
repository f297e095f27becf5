# Services package for the optimization toolkit
