# constants.py
"""
Constantes et descriptions utilisées par les quatre analyses.
Rôles, listes de tâches, descriptions de données et taxonomie d'audit.
"""

# === LIBELLÉS DES WORKFLOWS ===
WORKFLOW_LABELS = {
    'failure_modes': 'Identification des modes de défaillance',
    'causal_chain': 'Inférence de chaînes causales',
    'site_comparison': 'Analyse comparative des sites',
    'quality_audit': 'Audit de qualité des données',
}

COHORT_KINDS = ('subsystem', 'turbine_sequence', 'farm_group')

REVIEW_STATUS = 'machine_generated_pending_expert_review'
REVIEW_BANNER = ('Machine-generated analysis pending expert review. '
                 'Hypotheses are starting points for investigation, not established findings.')

# Ligne d'en-tête de la charge utile (les citations renvoient au log_id)
PAYLOAD_HEADER = 'log_id | date | subsystem | description | observations'

# Intitulés exigés du rapport Markdown d'audit
AUDIT_HEADINGS = ('Issues', 'Recommendations')


# === DÉFINITION DES PROMPTS PAR WORKFLOW ===
WORKFLOW_PROMPTS = {
    'failure_modes': {
        'role': 'Reliability Engineer',
        'context': (
            "The data below are maintenance work orders for a single wind turbine subsystem, "
            "exported from a computerised maintenance management system. Free text may mix "
            "Portuguese and English and is passed through untranslated."
        ),
        'tasks': [
            "Group semantically similar maintenance events into distinct failure modes.",
            "Provide a concise technical description of each failure mode.",
            "Estimate the number of logs that belong to each failure mode.",
            "Extract verbatim supporting quotes for each failure mode, each citing its log_id.",
        ],
        'contract': 'structured_object',
    },
    'causal_chain': {
        'role': 'Diagnostic Engineer',
        'context': (
            "The data below are the complete maintenance history of a single wind turbine, "
            "in chronological order. Free text may mix Portuguese and English."
        ),
        'tasks': [
            "Review the full chronological sequence of maintenance events.",
            "Identify plausible physical relationships between events.",
            "Construct a root-cause hypothesis for each causal chain, listing its member log_ids in date order.",
            "Assess the confidence of each chain as low, medium or high.",
        ],
        'contract': 'structured_object',
    },
    'site_comparison': {
        'role': 'O&M Analyst',
        'context': (
            "The data below are maintenance work orders from several wind farms, one section per farm. "
            "The technical characteristics and environmental context of each farm are listed first."
        ),
        'tasks': [
            "Identify the prevalent maintenance patterns at each site.",
            "Formulate a hypothesis for each pattern based on the provided environmental and operational context.",
        ],
        'contract': 'structured_object',
    },
    'quality_audit': {
        'role': 'Data Quality Expert',
        'context': (
            "The data below are raw maintenance work orders. Assess them as records, not as "
            "evidence of turbine faults. Free text may mix Portuguese and English."
        ),
        'tasks': [
            "Assess the clarity of the free-text entries.",
            "Identify common data issues, citing example log_ids.",
            "Provide actionable recommendations for technicians.",
        ],
        'contract': 'markdown_report',
    },
}


# === TAXONOMIE D'AUDIT (réponses du fournisseur simulé) ===
AUDIT_ISSUES = [
    {
        'title': 'Redundancy between Description and Observations',
        'description': ("Text from the Description field is frequently replicated verbatim into the "
                        "Observations field, which is otherwise left empty or filled with placeholders."),
    },
    {
        'title': 'Lack of Specificity and Quantification',
        'description': ("Many descriptions are overly general and reference physical parameters such as "
                        "temperature or pressure without numerical values or units."),
    },
    {
        'title': 'Inconsistent Terminology and Formatting',
        'description': ("Similar issues are described with different terms, languages are mixed, and "
                        "component names and error codes are formatted inconsistently."),
    },
]

AUDIT_RECOMMENDATIONS = [
    {
        'title': 'Implement Structured Data Entry',
        'description': ("Mandate a template defining the purpose of each free-text field: Description "
                        "states the component and observed problem, Observations holds actions, parts and measurements."),
    },
    {
        'title': 'Develop and Enforce Controlled Vocabularies',
        'description': ("Create a standard glossary of components, failure types and maintenance actions, "
                        "and replace free text with drop-down selections where possible."),
    },
    {
        'title': 'Promote a Culture of Quantitative Reporting',
        'description': ("Train technicians to quantify observations with measurements and units, "
                        "e.g. 'temperature reached 85°C' instead of 'overheating'."),
    },
]


# === MOTS VIDES (rapprochement des comptes, motifs comparatifs) ===
STOPWORDS = frozenset("""
a an and are as at be by for from has have in into is it its of on or the to was were with
after before during due not no per than that this these those then there
o os as um uma uns umas de do da dos das e em no na nos nas por para com sem ao aos pelo pela
que se foi era sao ser estar esta este esse essa isso apos durante
""".split())
