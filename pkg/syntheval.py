# syntheval.py
"""
Générateur de corpus synthétiques à vérité terrain connue et évaluation
des rapports du pipeline contre cette vérité.

La vérité est visible dans le texte (codes entre crochets comme [FMQ8] ou [CH01H]) :
l'évaluation vérifie la mécanique du pipeline, pas la compréhension sémantique.
"""
import datetime as dt
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field, asdict

import numpy as np
import pandas as pd

from config import PRESETS_DIR, DEFAULT_COLUMN_MAPPING, BOILERPLATE_PATTERNS
from corpus import write_table
from errors import ConfigError, DataError
from prep import clean_text

logger = logging.getLogger(__name__)

LOGS_FILENAME = 'maintenance_logs.csv'
SITES_FILENAME = 'sites.csv'
TRUTH_FILENAME = 'truth.json'

CHAIN_RECOVERY_JACCARD = 0.8

_CONFIDENCE_CODES = {'high': 'H', 'medium': 'M', 'low': 'L'}

# === VOCABULAIRE DE FOND ===
# (sous-système, texte) ; jamais de sous-système convertisseur ici
BACKGROUND_TEMPLATES = [
    ('Pitch System', 'Pitch bearing inspection completed without findings'),
    ('Pitch System', 'Substituição do motor de pitch da pá C'),
    ('Pitch System', 'Pitch battery capacity test below limit'),
    ('Yaw System', 'Yaw gear lubrication performed'),
    ('Yaw System', 'Ruído no sistema de orientação, pastilhas verificadas'),
    ('Yaw System', 'Yaw drive motor replaced'),
    ('Gearbox', 'Gearbox oil level topped up'),
    ('Gearbox', 'Análise de vibrações da caixa multiplicadora'),
    ('Gearbox', 'Endoscopic inspection of intermediate stage'),
    ('Generator', 'Generator alignment checked and corrected'),
    ('Generator', 'Escovas do gerador substituídas'),
    ('Generator', 'Generator cooling duct cleaned'),
    ('Blades', 'Blade visual inspection from ground'),
    ('Blades', 'Reparação de fissura no bordo de fuga'),
    ('Blades', 'Vortex generators reattached on blade B'),
    ('Tower', 'Tower bolt tensioning campaign'),
    ('Tower', 'Elevador da torre com avaria na botoneira'),
    ('Tower', 'Tower door seal replaced'),
    ('Hydraulic System', 'Hydraulic oil filter exchanged'),
    ('Hydraulic System', 'Fuga de óleo hidráulico no grupo de pressão'),
    ('Hydraulic System', 'Nitrogen precharge of accumulators adjusted'),
    ('Main Shaft', 'Main shaft locking pin lubricated'),
    ('Main Shaft', 'Inspeção do veio principal sem anomalias'),
    ('Rotor Bearings', 'Rolamento principal lubrificado manualmente'),
    ('Rotor Bearings', 'Main bearing temperature sensor recalibrated'),
    ('Cooling System', 'Nacelle radiator cleaned of debris'),
    ('Cooling System', 'Termóstato do circuito de arrefecimento substituído'),
    ('Control Cabinet', 'PLC firmware updated to latest release'),
    ('Control Cabinet', 'Relé de segurança testado e rearmado'),
    ('Control Cabinet', 'Emergency stop chain tested'),
    ('MV-Transformer', 'Transformer visual inspection and thermography'),
    ('MV-Transformer', 'Limpeza dos isoladores do transformador'),
    ('Nacelle', 'Nacelle crane annual certification'),
    ('Nacelle', 'Iluminação da nacelle reparada'),
    ('Nacelle', 'Smoke detector replaced in nacelle'),
    ('Wind Sensors', 'Ultrasonic wind sensor heater replaced'),
    ('Wind Sensors', 'Anemómetro substituído após tempestade'),
    ('Brake System', 'Mechanical brake disc inspected'),
    ('Brake System', 'Pastilhas do travão mecânico ajustadas'),
    ('Safety Equipment', 'Fall arrest system annual inspection'),
]

OBSERVATION_TEMPLATES = [
    'Unit returned to service',
    'Aguarda peça do fornecedor',
    'Técnico no local durante a manhã',
    'Work carried out under lockout procedure',
    'Production loss estimated below two hours',
    'Reposta em serviço após ensaio',
    'Follow-up scheduled at next visit',
    'Material retirado do armazém central',
]

UNINFORMATIVE_TEXTS = ['n/a', 'OK.', '-', 'teste', 'nada', 'Sem observações', 'ALM 2041', 'Verificado ok',
                       'FM300', 'NA']

NON_TURBINE_TEMPLATES = [
    ('Substation', 'Substation switchgear annual maintenance'),
    ('Subestação', 'Limpeza do posto de transformação da subestação'),
    ('Met Mast', 'Met mast anemometer calibration visit'),
    ('Acessos', 'Reparação do caminho de acesso após chuvas'),
    ('Edifício', 'Manutenção do ar condicionado do edifício de comando'),
    ('Buildings', 'Control building fire extinguishers checked'),
]

WORK_LABELS = {
    'corrective': ['Corrective', 'Corretiva', 'CM'],
    'preventive': ['Preventive', 'Preventiva', 'PM'],
}

ACTION_LABELS = ['Repair', 'Reparação', 'Replacement', 'Substituição', 'Inspection', 'Inspeção', 'Outro']

GENERIC_POWER_MW = [2.0, 2.3, 3.0, 3.6]
GENERIC_ROTOR_M = [82, 90, 101, 112]
GENERIC_HUB_M = [78, 80, 85, 95]


# === SPÉCIFICATION ET VÉRITÉ ===

@dataclass
class SynthSpec:
    name: str = 'custom'
    seed: int = 0
    n_logs: int = 0
    n_farms: int = 1
    n_turbines_per_farm: tuple = (10, 20)
    junk_fraction: float = 0.0
    junk_mix: dict = field(default_factory=lambda: {'uninformative': 0.6, 'non_turbine': 0.25})
    date_range: tuple = ('2018-01-01', '2022-12-31')
    farm_profiles: list = field(default_factory=list)
    converter_labels: list = field(default_factory=lambda: ['Power Converter'])
    planted_modes: list = field(default_factory=list)
    chain_farm: str = ''
    chain_turbine_logs: int = 0
    planted_chains: list = field(default_factory=list)
    farm_skews: dict = field(default_factory=dict)
    skew_fraction: float = 0.4
    boilerplate_fraction: float = 0.1
    foreign_date_fraction: float = 0.15
    redundancy_fraction: float = 0.3

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError('bad_synth_spec', f"Champs inconnus: {', '.join(unknown)}", fields=unknown)
        spec = cls(**data)
        spec.n_turbines_per_farm = tuple(spec.n_turbines_per_farm)
        spec.date_range = tuple(spec.date_range)
        return spec

    def to_dict(self):
        return asdict(self)

    @property
    def start(self):
        return dt.date.fromisoformat(self.date_range[0])

    @property
    def end(self):
        return dt.date.fromisoformat(self.date_range[1])

    @property
    def n_junk(self):
        return int(np.floor(self.junk_fraction * self.n_logs + 0.5))

    @property
    def n_planted(self):
        return sum(int(m['target_count']) for m in self.planted_modes)

    @property
    def n_background(self):
        return self.n_logs - self.n_planted - self.n_junk - self.chain_turbine_logs

    def validate(self):
        """Vérifie la faisabilité : Σ modes + rebut + turbine à chaînes + fond = n_logs."""
        if self.n_logs < 1:
            raise DataError('infeasible_spec', "n_logs doit être positif", n_logs=self.n_logs)
        if self.n_background < 0:
            raise DataError('infeasible_spec',
                            f"Comptes plantés ({self.n_planted}) + rebut ({self.n_junk}) + turbine à chaînes "
                            f"({self.chain_turbine_logs}) dépassent n_logs ({self.n_logs})",
                            n_logs=self.n_logs, planted=self.n_planted, junk=self.n_junk)
        if self.end <= self.start:
            raise DataError('infeasible_spec', "Plage de dates vide", date_range=list(self.date_range))
        for mode in self.planted_modes:
            if not mode.get('templates'):
                raise DataError('infeasible_spec', f"Mode sans gabarit: {mode.get('canonical_token')}")
        chain_events = sum(len(c['events']) for c in self.planted_chains)
        if chain_events > self.chain_turbine_logs:
            raise DataError('infeasible_spec',
                            f"{chain_events} événements de chaînes pour {self.chain_turbine_logs} journaux de turbine")
        span = (self.end - self.start).days
        for chain in self.planted_chains:
            offsets = [e['offset_days'] for e in chain['events']]
            if offsets != sorted(set(offsets)) or offsets[-1] > span:
                raise DataError('infeasible_spec', f"Décalages invalides pour la chaîne {chain['chain_id']}")
        if len(self.farm_profiles) > self.n_farms:
            raise DataError('infeasible_spec', "Plus de profils de parcs que de parcs")
        return self


@dataclass
class SynthTruth:
    mode_assignments: dict = field(default_factory=dict)
    chain_turbine: str = ''
    chain_memberships: list = field(default_factory=list)
    chain_confidences: dict = field(default_factory=dict)
    junk_ids: list = field(default_factory=list)
    farm_skew: dict = field(default_factory=dict)

    @property
    def mode_counts(self):
        return dict(Counter(token for token in self.mode_assignments.values() if token))

    def to_dict(self):
        return {
            'mode_assignments': self.mode_assignments,
            'chain_turbine': self.chain_turbine,
            'chain_memberships': [[chain_id, list(ids)] for chain_id, ids in self.chain_memberships],
            'chain_confidences': self.chain_confidences,
            'junk_ids': list(self.junk_ids),
            'farm_skew': self.farm_skew,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            mode_assignments=dict(data.get('mode_assignments', {})),
            chain_turbine=data.get('chain_turbine', ''),
            chain_memberships=[(chain_id, list(ids)) for chain_id, ids in data.get('chain_memberships', [])],
            chain_confidences=dict(data.get('chain_confidences', {})),
            junk_ids=list(data.get('junk_ids', [])),
            farm_skew=dict(data.get('farm_skew', {})),
        )

    def write(self, path, meta=None):
        payload = {'meta': meta or {}, **self.to_dict()}
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write('\n')

    @classmethod
    def read(cls, path):
        if not os.path.exists(path):
            raise ConfigError('missing_file', f"Vérité terrain introuvable: {path}", path=path)
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def load_preset(name_or_path):
    """Preset livré (paper-shape, minimal, fuzz) ou chemin vers un fichier JSON."""
    path = name_or_path
    if not os.path.exists(path):
        path = os.path.join(PRESETS_DIR, f"{name_or_path}.json")
    if not os.path.exists(path):
        raise ConfigError('unknown_preset', f"Preset introuvable: {name_or_path}", preset=name_or_path)
    with open(path, 'r', encoding='utf-8') as f:
        return SynthSpec.from_dict(json.load(f))


# === GÉNÉRATION ===

@dataclass
class _Draft:
    kind: str
    farm_id: str
    turbine_id: str
    subsystem_name: str
    event_date: dt.date
    description: str
    observations: str = ''
    work: str = 'corrective'
    token: str = None
    chain_id: str = None


class _Fleet:
    """Parcs et turbines tirés du générateur ; identifiants de turbine globaux (T0001...)."""

    def __init__(self, spec, rng):
        self.farms = []
        profiles = {p['farm_id']: p for p in spec.farm_profiles}
        explicit = [p['farm_id'] for p in spec.farm_profiles]
        generic_index = 1
        farm_ids = list(explicit)
        while len(farm_ids) < spec.n_farms:
            candidate = f"WF{generic_index}"
            generic_index += 1
            if candidate not in profiles:
                farm_ids.append(candidate)
        low, high = spec.n_turbines_per_farm
        for farm_id in farm_ids:
            if farm_id in profiles:
                self.farms.append(dict(profiles[farm_id]))
                continue
            number = ''.join(ch for ch in farm_id if ch.isdigit()) or farm_id
            self.farms.append({
                'farm_id': farm_id,
                'n_turbines': int(rng.integers(low, high + 1)),
                'turbine_model_label': f"Model G{number}",
                'rated_power_mw': float(rng.choice(GENERIC_POWER_MW)),
                'rotor_diameter_m': float(rng.choice(GENERIC_ROTOR_M)),
                'hub_height_m': float(rng.choice(GENERIC_HUB_M)),
                'site_id': f"S{number}",
                'location_notes': '',
            })

        self.turbines = []
        self.commissioning = {}
        counter = 1
        for farm in self.farms:
            for _ in range(int(farm['n_turbines'])):
                turbine_id = f"T{counter:04d}"
                counter += 1
                self.turbines.append((farm['farm_id'], turbine_id))
                self.commissioning[turbine_id] = spec.start - dt.timedelta(days=int(rng.integers(180, 3000)))

        self.chain_turbine = None
        if spec.chain_turbine_logs:
            chain_farm = spec.chain_farm or self.farms[0]['farm_id']
            owned = [t for t in self.turbines if t[0] == chain_farm]
            if not owned:
                raise DataError('infeasible_spec', f"Parc de la turbine à chaînes inconnu: {chain_farm}")
            self.chain_turbine = owned[0]
        self.others = [t for t in self.turbines if t != self.chain_turbine] or list(self.turbines)

    def pick(self, rng):
        return self.others[int(rng.integers(len(self.others)))]


def _random_date(rng, spec):
    return spec.start + dt.timedelta(days=int(rng.integers((spec.end - spec.start).days + 1)))


class _KeyRegistry:
    """Clés (parc, turbine, date, description nettoyée) des journaux conservés, toutes distinctes."""

    def __init__(self, spec):
        self.spec = spec
        self.keys = set()

    def claim(self, draft, movable=True):
        span = (self.spec.end - self.spec.start).days
        cleaned = clean_text(draft.description, BOILERPLATE_PATTERNS)
        for step in range(span + 1):
            key = (draft.farm_id, draft.turbine_id, draft.event_date, cleaned)
            if key not in self.keys:
                self.keys.add(key)
                return draft
            if not movable:
                break
            shifted = draft.event_date + dt.timedelta(days=1)
            draft.event_date = shifted if shifted <= self.spec.end else self.spec.start
        raise DataError('infeasible_spec', "Impossible d'éviter un doublon involontaire", turbine=draft.turbine_id)


def _mode_drafts(spec, fleet, rng, registry):
    drafts = []
    for mode in spec.planted_modes:
        token = mode['canonical_token']
        for _ in range(int(mode['target_count'])):
            farm_id, turbine_id = fleet.pick(rng)
            text = f"[{token}] {mode['templates'][int(rng.integers(len(mode['templates'])))]}"
            observations = text if rng.random() < spec.redundancy_fraction else ''
            label = spec.converter_labels[int(rng.integers(len(spec.converter_labels)))]
            drafts.append(registry.claim(_Draft('mode', farm_id, turbine_id, label, _random_date(rng, spec),
                                                text, observations, token=token)))
    return drafts


def _background_draft(spec, rng, farm_id, turbine_id, event_date=None):
    subsystem, text = BACKGROUND_TEMPLATES[int(rng.integers(len(BACKGROUND_TEMPLATES)))]
    observations = ''
    if rng.random() < 0.5:
        observations = OBSERVATION_TEMPLATES[int(rng.integers(len(OBSERVATION_TEMPLATES)))]
    work = 'preventive' if rng.random() < 0.4 else 'corrective'
    return _Draft('background', farm_id, turbine_id, subsystem, event_date or _random_date(rng, spec),
                  text, observations, work=work)


def _chain_drafts(spec, fleet, rng, registry):
    if fleet.chain_turbine is None:
        return []
    farm_id, turbine_id = fleet.chain_turbine
    span = (spec.end - spec.start).days
    drafts = []
    for chain in spec.planted_chains:
        number = chain['chain_id'].lstrip('C')
        tag = f"[CH{number}{_CONFIDENCE_CODES[chain['confidence']]}]"
        last = chain['events'][-1]['offset_days']
        start = spec.start + dt.timedelta(days=int(rng.integers(span - last + 1)))
        for event in chain['events']:
            draft = _Draft('chain', farm_id, turbine_id, event['subsystem'],
                           start + dt.timedelta(days=int(event['offset_days'])),
                           f"{tag} {event['text']}", chain_id=chain['chain_id'])
            drafts.append(registry.claim(draft, movable=False))

    # Remplissage : premier et dernier jours fixés pour couvrir toute la période
    n_filler = spec.chain_turbine_logs - len(drafts)
    for index in range(n_filler):
        event_date = spec.start if index == 0 else spec.end if index == 1 else None
        drafts.append(registry.claim(_background_draft(spec, rng, farm_id, turbine_id, event_date)))
    return drafts


def _junk_drafts(spec, fleet, rng, background):
    n_junk = spec.n_junk
    n_uninformative = int(np.floor(n_junk * spec.junk_mix.get('uninformative', 0) + 0.5))
    n_non_turbine = int(np.floor(n_junk * spec.junk_mix.get('non_turbine', 0) + 0.5))
    n_uninformative = min(n_uninformative, n_junk)
    n_non_turbine = min(n_non_turbine, n_junk - n_uninformative)
    n_duplicate = n_junk - n_uninformative - n_non_turbine
    if n_duplicate > len(background):
        raise DataError('infeasible_spec', "Pas assez de journaux de fond à dupliquer",
                        duplicates=n_duplicate, background=len(background))

    drafts = []
    for _ in range(n_uninformative):
        farm_id, turbine_id = fleet.pick(rng)
        subsystem, _ = BACKGROUND_TEMPLATES[int(rng.integers(len(BACKGROUND_TEMPLATES)))]
        text = UNINFORMATIVE_TEXTS[int(rng.integers(len(UNINFORMATIVE_TEXTS)))]
        observations = UNINFORMATIVE_TEXTS[int(rng.integers(len(UNINFORMATIVE_TEXTS)))] if rng.random() < 0.3 else ''
        drafts.append(_Draft('uninformative', farm_id, turbine_id, subsystem, _random_date(rng, spec),
                             text, observations))
    for _ in range(n_non_turbine):
        farm_id, turbine_id = fleet.pick(rng)
        subsystem, text = NON_TURBINE_TEMPLATES[int(rng.integers(len(NON_TURBINE_TEMPLATES)))]
        drafts.append(_Draft('non_turbine', farm_id, turbine_id, subsystem, _random_date(rng, spec), text,
                             work='preventive'))
    duplicates = []
    if n_duplicate:
        for index in sorted(rng.choice(len(background), size=n_duplicate, replace=False)):
            original = background[int(index)]
            duplicates.append(_Draft('duplicate', original.farm_id, original.turbine_id, original.subsystem_name,
                                     original.event_date, original.description, original.observations,
                                     work=original.work))
    return drafts, duplicates


def _apply_skews(spec, kept, rng):
    """Ajoute le jeton de biais du parc dans les observations d'une fraction de ses journaux de fond."""
    for farm_id, token in sorted(spec.farm_skews.items()):
        farm_kept = [d for d in kept if d.farm_id == farm_id]
        candidates = [d for d in farm_kept if d.kind == 'background']
        k = min(len(candidates), int(np.floor(spec.skew_fraction * len(farm_kept) + 0.5)))
        if k == 0:
            logger.warning("⚠️ Aucun journal de fond pour le biais %s du parc %s", token, farm_id)
            continue
        for index in sorted(rng.choice(len(candidates), size=k, replace=False)):
            draft = candidates[int(index)]
            draft.observations = f"{draft.observations} [{token}]".strip()


def _format_date(rng, spec, value):
    if rng.random() < spec.foreign_date_fraction:
        return value.strftime('%d/%m/%Y')
    return value.isoformat()


def _add_boilerplate(spec, kept, rng):
    """Préfixe GMAO sur une fraction des descriptions (retiré au nettoyage)."""
    for draft in kept:
        if rng.random() < spec.boilerplate_fraction:
            draft.description = f"OT {int(rng.integers(1000, 99999))} - {draft.description}"


def _row(spec, rng, log_id, draft, fleet):
    return {
        'log_id': log_id,
        'farm_id': draft.farm_id,
        'turbine_id': draft.turbine_id,
        'subsystem_name': draft.subsystem_name,
        'event_date': _format_date(rng, spec, draft.event_date),
        'age_at_event_days': str((draft.event_date - fleet.commissioning[draft.turbine_id]).days),
        'work_class': WORK_LABELS[draft.work][int(rng.integers(len(WORK_LABELS[draft.work])))],
        'action_class': ACTION_LABELS[int(rng.integers(len(ACTION_LABELS)))],
        'description': draft.description,
        'observations': draft.observations,
    }


def _sites_frame(fleet):
    columns = ['farm_id', 'turbine_model_label', 'n_turbines', 'rated_power_mw', 'rotor_diameter_m',
               'hub_height_m', 'site_id', 'location_notes']
    return pd.DataFrame([{c: farm.get(c, '') for c in columns} for farm in fleet.farms], columns=columns)


def generate(spec, out_dir, meta=None):
    """
    Génère le corpus brut, la table des sites et la vérité terrain.
    Déterministe pour une graine donnée (fichiers identiques octet pour octet).

    Returns:
        (chemin de la table brute, SynthTruth)
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    fleet = _Fleet(spec, rng)
    registry = _KeyRegistry(spec)

    modes = _mode_drafts(spec, fleet, rng, registry)
    chains = _chain_drafts(spec, fleet, rng, registry)
    background = [registry.claim(_background_draft(spec, rng, *fleet.pick(rng))) for _ in range(spec.n_background)]
    kept = modes + chains + background
    _apply_skews(spec, kept, rng)
    _add_boilerplate(spec, kept, rng)
    junk, duplicates = _junk_drafts(spec, fleet, rng, background)

    # Les doublons reçoivent les identifiants les plus élevés : l'original les précède à date égale
    pool = kept + junk
    ordered = [pool[int(i)] for i in rng.permutation(len(pool))] + duplicates
    width = max(6, len(str(len(ordered))))
    rows = []
    truth = SynthTruth(chain_turbine=fleet.chain_turbine[1] if fleet.chain_turbine else '',
                       farm_skew=dict(spec.farm_skews))
    members = {}
    for number, draft in enumerate(ordered, start=1):
        log_id = f"ML{number:0{width}d}"
        rows.append(_row(spec, rng, log_id, draft, fleet))
        truth.mode_assignments[log_id] = draft.token or None
        if draft.chain_id:
            members.setdefault(draft.chain_id, []).append((draft.event_date, log_id))
        if draft.kind in ('uninformative', 'non_turbine', 'duplicate'):
            truth.junk_ids.append(log_id)

    for chain in spec.planted_chains:
        ids = [log_id for _, log_id in sorted(members.get(chain['chain_id'], []))]
        truth.chain_memberships.append((chain['chain_id'], ids))
        truth.chain_confidences[chain['chain_id']] = chain['confidence']
    truth.junk_ids.sort()

    os.makedirs(out_dir, exist_ok=True)
    meta = dict(meta or {}, preset=spec.name, seed=spec.seed)
    logs_path = os.path.join(out_dir, LOGS_FILENAME)
    write_table(pd.DataFrame(rows, columns=list(DEFAULT_COLUMN_MAPPING)), logs_path, meta)
    write_table(_sites_frame(fleet), os.path.join(out_dir, SITES_FILENAME), meta)
    truth.write(os.path.join(out_dir, TRUTH_FILENAME), meta)

    logger.info("✅ Corpus synthétique '%s' (graine %d): %d journaux, %d rebuts, %d modes, %d chaînes",
                spec.name, spec.seed, len(rows), len(truth.junk_ids), len(truth.mode_counts),
                len(truth.chain_memberships))
    return logs_path, truth


# === ÉVALUATION ===

def _mentions(text, token):
    return f"[{token}]".casefold() in text.casefold()


def _mode_token(mode, tokens):
    for token in tokens:
        if _mentions(mode.name, token):
            return token
    for token in tokens:
        if any(_mentions(q.quote, token) for q in mode.supporting_quotes):
            return token
    return None


def score_modes(report, truth):
    """
    Rappel et précision de la récupération des jetons plantés,
    exactitude des comptes rapprochés des modes appariés.
    """
    for mode in report.modes:
        for quote in mode.supporting_quotes:
            if quote.log_id not in truth.mode_assignments:
                raise DataError('corpus_mismatch', f"Citation absente du corpus de vérité: {quote.log_id}",
                                log_id=quote.log_id)
    truth_counts = truth.mode_counts
    tokens = sorted(truth_counts)
    matched = {}
    for mode in report.modes:
        token = _mode_token(mode, tokens)
        if token is not None:
            matched.setdefault(token, mode)

    matched_modes = [m for m in report.modes if _mode_token(m, tokens) is not None]
    recall = len(matched) / len(tokens) if tokens else 1.0
    precision = len(matched_modes) / len(report.modes) if report.modes else 0.0
    exact = sum(1 for token, mode in matched.items() if mode.reconciled_count == truth_counts[token])
    count_exactness = exact / len(matched) if matched else 0.0
    return {'mode_recall': recall, 'mode_precision': precision, 'count_exactness': count_exactness}


def jaccard(a, b):
    a, b = set(a), set(b)
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def score_chains(report, truth):
    """Une chaîne plantée est retrouvée si une chaîne prédite la recouvre à Jaccard >= 0.8."""
    if report.turbine_id != truth.chain_turbine:
        raise DataError('turbine_mismatch', f"Rapport pour {report.turbine_id}, vérité pour {truth.chain_turbine}",
                        report_turbine=report.turbine_id, truth_turbine=truth.chain_turbine)
    if not truth.chain_memberships:
        return {'chain_recall': 1.0, 'membership_jaccard_mean': 1.0}
    best = []
    for _, ids in truth.chain_memberships:
        best.append(max((jaccard(ids, chain.member_log_ids) for chain in report.chains), default=0.0))
    recovered = sum(1 for score in best if score >= CHAIN_RECOVERY_JACCARD)
    return {
        'chain_recall': recovered / len(best),
        'membership_jaccard_mean': float(np.mean(best)),
    }
