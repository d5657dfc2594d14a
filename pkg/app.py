# app.py
"""
Point d'entrée principal : pipeline en ligne de commande.

    python app.py synth --preset paper-shape --seed 42 --out data/synth
    python app.py ingest --input data/synth/maintenance_logs.csv --out data/corpus.jsonl
    python app.py prep --corpus data/corpus.jsonl --out data/prep
    python app.py cohort --corpus data/prep/corpus.jsonl --kind subsystem --name "Power Converter" --out data/cohort.json
    python app.py analyze --task failure-modes --corpus data/prep/corpus.jsonl --cohort data/cohort.json --out data/report.json
    python app.py report --report data/report.json --format markdown --out data/report.md
    python app.py score --task failure-modes --report data/report.json --truth data/synth/truth.json

Codes de sortie : 0 succès, 2 configuration, 3 données/validation, 4 fournisseur, 5 reprises épuisées.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import pandas as pd

from config import (
    TEMPLATES_DIR, TEMPLATE_VERSION, AUDIT_TRAIL_PATH, CHUNKING, COHORTS,
    config_hash, get_config_summary, get_default_config, load_key_value_file, load_mapping,
    load_policy, load_provider_profiles,
)
from cohorts import subsystem_cohort, turbine_cohort, comparative_group, write_manifest, read_manifest
from corpus import ingest, load_site_contexts, read_corpus, write_corpus, write_table
from errors import PipelineError, ConfigError
from gateway import AuditTrail, get_profile, make_provider
from insights import (
    pareto, timeline, create_pareto_chart, create_timeline_chart, render_markdown, write_figure,
    write_plot_data,
)
from prep import Glossary, anonymize_contexts, decisions_frame, prepare
from promptkit import (
    build_failure_mode_prompt, build_causal_prompt, build_comparison_prompt, build_audit_prompt,
    render, dump_prompt,
)
from schemas import dump_report, load_report
from syntheval import SynthTruth, generate, load_preset, score_modes, score_chains
from workflows import run_failure_mode_analysis, run_causal_inference, run_comparison, run_quality_audit

logger = logging.getLogger(__name__)

TASKS = {
    'failure-modes': 'failure_modes',
    'causal': 'causal_chain',
    'compare': 'site_comparison',
    'audit': 'quality_audit',
}

COHORT_KINDS = ('subsystem', 'turbine', 'farm-group')
REPORT_FORMATS = ('markdown', 'plot-data', 'figure')

# Clés du fichier --config ; les chemins sont exclus de l'empreinte
RUN_CONFIG_KEYS = ('provider', 'strategy', 'fraction', 'seed', 'stratify', 'policy', 'mapping', 'profiles',
                   'template_version', 'max_in_flight')
PATH_KEYS = ('policy', 'mapping', 'profiles')


# === CONFIGURATION D'EXÉCUTION ===

@dataclass
class RunConfig:
    command: str
    provider: str = 'mock'
    strategy: str = CHUNKING['default_strategy']
    fraction: float = None
    seed: int = 0
    stratify: bool = False
    policy: str = None
    mapping: str = None
    profiles: str = None
    template_version: str = TEMPLATE_VERSION
    max_in_flight: int = CHUNKING['max_in_flight']
    options: dict = field(default_factory=dict)

    @classmethod
    def from_sources(cls, args, file_values):
        """Fichier --config d'abord, puis les options explicites de la ligne de commande."""
        unknown = sorted(set(file_values) - set(RUN_CONFIG_KEYS))
        if unknown:
            raise ConfigError('unknown_config_key', f"Clés inconnues dans --config: {', '.join(unknown)}",
                              keys=unknown)
        config = cls(command=args.command)
        for key in RUN_CONFIG_KEYS:
            if key in file_values and file_values[key] != '':
                setattr(config, key, file_values[key])
            value = getattr(args, key, None)
            if value is not None:
                setattr(config, key, value)
        try:
            config.seed = int(config.seed)
            config.max_in_flight = int(config.max_in_flight)
            config.fraction = None if config.fraction in (None, '') else float(config.fraction)
        except (TypeError, ValueError) as e:
            raise ConfigError('bad_flag', f"Valeur numérique invalide: {e}")
        if isinstance(config.stratify, str):
            config.stratify = config.stratify.strip().lower() in ('1', 'true', 'yes', 'on')
        config.options = {k: v for k, v in vars(args).items()
                          if k not in RUN_CONFIG_KEYS and k not in ('config', 'verbose', 'json_errors',
                                                                    'audit_trail', 'handler')}
        return config

    def validate(self):
        for key in PATH_KEYS:
            path = getattr(self, key)
            if path and not os.path.exists(path):
                raise ConfigError('missing_file', f"Fichier introuvable ({key}): {path}", path=path)
        if self.template_version != TEMPLATE_VERSION:
            raise ConfigError('template_version_mismatch',
                              f"Gabarits {self.template_version} demandés, {TEMPLATE_VERSION} livrés",
                              pinned=self.template_version, available=TEMPLATE_VERSION)
        if not os.path.isdir(os.path.join(TEMPLATES_DIR, self.template_version)):
            raise ConfigError('missing_template', f"Gabarits introuvables: {self.template_version}")
        return self

    def fingerprint(self):
        """Configuration effective (valeurs chargées, sans chemins ni horodatage)."""
        options = {k: v for k, v in self.options.items()
                   if not k.endswith(('corpus', 'input', 'out', 'cohort', 'report', 'truth', 'sites',
                                      'glossary', 'dump_prompts', 'rejections'))}
        return {
            'command': self.command,
            'provider': self.provider,
            'strategy': self.strategy,
            'fraction': self.fraction,
            'seed': self.seed,
            'stratify': self.stratify,
            'template_version': self.template_version,
            'policy': load_policy(self.policy),
            'mapping': load_mapping(self.mapping),
            'profiles': load_provider_profiles(self.profiles),
            'options': options,
        }

    def meta(self, seed=None):
        return {
            'config_hash': config_hash(self.fingerprint()),
            'seed': self.seed if seed is None else seed,
            'template_version': self.template_version,
        }


# === COMMANDES ===

def cmd_synth(config, args):
    spec = load_preset(args.preset)
    if args.seed is not None:
        spec.seed = args.seed
    config.seed = spec.seed
    logs_path, truth = generate(spec, args.out, config.meta())
    logger.info("📊 %s : %d rebuts, %d journaux plantés", logs_path, len(truth.junk_ids),
                sum(truth.mode_counts.values()))
    return 0


def cmd_ingest(config, args):
    corpus = ingest(args.input, mapping=load_mapping(config.mapping))
    meta = config.meta()
    write_corpus(corpus, args.out, meta)
    if args.rejections:
        rows = [(r.row_number, r.log_id, r.reason) for r in corpus.rejections]
        write_table(pd.DataFrame(rows, columns=['row_number', 'log_id', 'reason']), args.rejections, meta)
    logger.info("✅ Corpus canonique écrit: %s (%d journaux, %d rejets)", args.out, len(corpus),
                len(corpus.rejections))
    return 0


def cmd_prep(config, args):
    corpus = read_corpus(args.corpus)
    result = prepare(corpus, load_policy(config.policy))
    meta = config.meta()
    os.makedirs(args.out, exist_ok=True)
    write_corpus(result.corpus, os.path.join(args.out, 'corpus.jsonl'), meta)
    result.glossary.write(os.path.join(args.out, 'glossary.csv'), meta)
    write_table(decisions_frame(result.decisions), os.path.join(args.out, 'decisions.csv'), meta)
    return 0


def cmd_cohort(config, args):
    corpus = read_corpus(args.corpus)
    if args.kind == 'subsystem':
        if not args.name:
            raise ConfigError('bad_flag', "--name est requis pour --kind subsystem")
        cohort = subsystem_cohort(corpus, args.name)
    elif args.kind == 'turbine':
        cohort = turbine_cohort(corpus, args.turbine, args.min_days, args.frequency_basis)
    else:
        if not args.sites:
            raise ConfigError('bad_flag', "--sites est requis pour --kind farm-group")
        contexts = load_site_contexts(args.sites)
        if args.glossary:
            contexts = anonymize_contexts(contexts, Glossary.read(args.glossary))
        strategy = [f.strip() for f in args.farms.split(',') if f.strip()] if args.farms else 'auto'
        cohort = comparative_group(corpus, contexts, strategy, args.group_size, args.max_ratio)
    write_manifest(cohort, args.out, config.meta())
    logger.info("✅ Manifeste de cohorte écrit: %s (%d journaux)", args.out, len(cohort))
    return 0


def _prompt_for(task, cohort, corpus):
    if task == 'failure_modes':
        return build_failure_mode_prompt(cohort, corpus)
    if task == 'causal_chain':
        return build_causal_prompt(cohort, corpus)
    if task == 'site_comparison':
        return build_comparison_prompt(cohort, corpus)
    return build_audit_prompt(corpus.records)


def cmd_analyze(config, args):
    task = TASKS[args.task]
    profile = get_profile(config.provider, load_provider_profiles(config.profiles))
    provider = make_provider(config.provider)
    corpus = read_corpus(args.corpus)
    cohort = None
    if task != 'quality_audit':
        if not args.cohort:
            raise ConfigError('bad_flag', f"--cohort est requis pour --task {args.task}")
        cohort = read_manifest(args.cohort)

    if args.dump_prompts:
        text, tokens = render(_prompt_for(task, cohort, corpus))
        path = dump_prompt(text, args.dump_prompts, task)
        logger.debug("Prompt complet (%d tokens estimés) écrit: %s", tokens, path)

    trail = AuditTrail(args.audit_trail)
    common = dict(audit_trail=trail)
    if task == 'failure_modes':
        report = run_failure_mode_analysis(cohort, corpus, profile, provider, config.strategy, config.seed,
                                           config.fraction, config.stratify, max_in_flight=config.max_in_flight,
                                           **common)
    elif task == 'causal_chain':
        report = run_causal_inference(cohort, corpus, profile, provider, **common)
    elif task == 'site_comparison':
        report = run_comparison(cohort, corpus, profile, provider, config.strategy, config.seed,
                                config.fraction, **common)
    else:
        report = run_quality_audit(corpus, profile, provider, config.strategy, config.seed, config.fraction,
                                   config.stratify, max_in_flight=config.max_in_flight, **common)

    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, 'w', encoding='utf-8', newline='\n') as f:
        f.write(dump_report(report, config.meta()))
    logger.info("✅ Rapport écrit: %s", args.out)
    return 0


def _read_report(path):
    if not os.path.exists(path):
        raise ConfigError('missing_file', f"Rapport introuvable: {path}", path=path)
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    seed = json.loads(text).get('meta', {}).get('seed')
    return load_report(text), seed


def cmd_report(config, args):
    report, seed = _read_report(args.report)
    meta = config.meta(seed)
    if args.format == 'markdown':
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, 'w', encoding='utf-8', newline='\n') as f:
            f.write(render_markdown(report, meta))
        logger.info("✅ Document écrit: %s", args.out)
        return 0

    if report.report_type == 'failure_modes':
        data = pareto(report)
        figure = create_pareto_chart
    elif report.report_type == 'causal_chain':
        if not args.corpus:
            raise ConfigError('bad_flag', "--corpus est requis pour la timeline des chaînes causales")
        data = timeline(report, read_corpus(args.corpus))
        figure = create_timeline_chart
    else:
        raise ConfigError('unsupported_format',
                          f"Format {args.format} indisponible pour un rapport {report.report_type}",
                          report_type=report.report_type)
    if args.format == 'plot-data':
        write_plot_data(data, args.out, meta)
    else:
        write_figure(figure(data), args.out, meta)
    return 0


def cmd_score(config, args):
    report, seed = _read_report(args.report)
    truth = SynthTruth.read(args.truth)
    expected = TASKS[args.task]
    if report.report_type != expected:
        raise ConfigError('bad_flag', f"Rapport {report.report_type} fourni pour --task {args.task}")
    metrics = score_modes(report, truth) if expected == 'failure_modes' else score_chains(report, truth)
    print(json.dumps(metrics, sort_keys=True))
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, 'w', encoding='utf-8', newline='\n') as f:
            json.dump({'meta': config.meta(seed), **metrics}, f, indent=2, sort_keys=True)
            f.write('\n')
    return 0


# === ANALYSE DES ARGUMENTS ===

def build_parser():
    parser = argparse.ArgumentParser(prog='app.py',
                                     description="Analyse sémantique de fiabilité des journaux de maintenance.")
    parser.add_argument('--config', help="fichier clé=valeur de configuration d'exécution")
    parser.add_argument('--verbose', action='store_true', help="journalisation DEBUG")
    parser.add_argument('--json-errors', action='store_true', help="objet d'erreur JSON sur stdout")
    parser.add_argument('--audit-trail', default=AUDIT_TRAIL_PATH, help="journal d'audit des appels fournisseur")
    sub = parser.add_subparsers(dest='command', required=True)

    synth = sub.add_parser('synth', help="corpus synthétique + vérité terrain")
    synth.add_argument('--preset', default='paper-shape')
    synth.add_argument('--seed', type=int)
    synth.add_argument('--out', required=True)
    synth.set_defaults(handler=cmd_synth)

    ing = sub.add_parser('ingest', help="table brute -> corpus canonique")
    ing.add_argument('--input', required=True)
    ing.add_argument('--mapping')
    ing.add_argument('--out', required=True)
    ing.add_argument('--rejections')
    ing.set_defaults(handler=cmd_ingest)

    prp = sub.add_parser('prep', help="nettoyage, filtrage, anonymisation")
    prp.add_argument('--corpus', required=True)
    prp.add_argument('--policy')
    prp.add_argument('--out', required=True)
    prp.set_defaults(handler=cmd_prep)

    coh = sub.add_parser('cohort', help="sélection d'une cohorte")
    coh.add_argument('--corpus', required=True)
    coh.add_argument('--kind', choices=COHORT_KINDS, required=True)
    coh.add_argument('--name')
    coh.add_argument('--turbine')
    coh.add_argument('--min-days', type=int, default=COHORTS['min_observation_days'])
    coh.add_argument('--frequency-basis', choices=('span', 'commissioning'), default=COHORTS['frequency_basis'])
    coh.add_argument('--sites')
    coh.add_argument('--glossary')
    coh.add_argument('--farms', help="liste explicite de parcs séparés par des virgules")
    coh.add_argument('--group-size', type=int, default=COHORTS['group_size'])
    coh.add_argument('--max-ratio', type=float, default=COHORTS['max_ratio'])
    coh.add_argument('--out', required=True)
    coh.set_defaults(handler=cmd_cohort)

    ana = sub.add_parser('analyze', help="exécution d'un workflow")
    ana.add_argument('--task', choices=sorted(TASKS), required=True)
    ana.add_argument('--corpus', required=True)
    ana.add_argument('--cohort')
    ana.add_argument('--provider')
    ana.add_argument('--profiles')
    ana.add_argument('--strategy', choices=('full', 'packed', 'sampled', 'sampled_fraction'))
    ana.add_argument('--fraction', type=float)
    ana.add_argument('--seed', type=int)
    ana.add_argument('--stratify', action='store_true', default=None)
    ana.add_argument('--max-in-flight', type=int)
    ana.add_argument('--dump-prompts')
    ana.add_argument('--out', required=True)
    ana.set_defaults(handler=cmd_analyze)

    rep = sub.add_parser('report', help="documents et données de graphiques")
    rep.add_argument('--report', required=True)
    rep.add_argument('--format', choices=REPORT_FORMATS, default='markdown')
    rep.add_argument('--corpus')
    rep.add_argument('--out', required=True)
    rep.set_defaults(handler=cmd_report)

    sco = sub.add_parser('score', help="évaluation contre la vérité terrain")
    sco.add_argument('--task', choices=('failure-modes', 'causal'), required=True)
    sco.add_argument('--report', required=True)
    sco.add_argument('--truth', required=True)
    sco.add_argument('--out')
    sco.set_defaults(handler=cmd_score)
    return parser


def setup_logging(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
        force=True,
    )


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        config = RunConfig.from_sources(args, load_key_value_file(args.config)).validate()
        if args.verbose:
            logger.debug(get_config_summary(get_default_config()))
        return args.handler(config, args)
    except PipelineError as e:
        logger.error("❌ %s: %s", e.code, e.message)
        if args.json_errors:
            print(json.dumps(e.to_dict(), ensure_ascii=False, sort_keys=True))
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
